//! Specification lifting and controller synthesis.
//!
//! The controller is the greatest fixpoint of a safety game on the product of
//! the symbolic model and the lifted specification: a product state survives
//! while some input exists whose every successor burst (over all burst
//! lengths) is matched, within `mu_x`, by a specification successor that
//! also survives. Lifted specification states with identical successor sets
//! are merged into one class, since they have the same future. Controller
//! states are the surviving pairs of a symbolic state and a class; projecting
//! them onto their symbolic component gives the sub-system of the symbolic
//! model.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::abstraction::{AbsError, Abstraction, AggregateState, LyapunovCertificate, Variant};
use crate::relations::{Flavor, PairRelation};
use crate::tsys::{burst_distance, Burst, FiniteSystem, InputId, StateId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("ParameterViolation: {0}")]
    ParameterViolation(String),
    #[error("EmptyController: no initial state survives ({explored} product states explored; first deleted: {first_deleted:?})")]
    EmptyController {
        explored: usize,
        first_deleted: Vec<String>,
    },
    #[error("CapacityExceeded: {count} items exceed the budget of {budget}")]
    CapacityExceeded { count: u128, budget: u128 },
    #[error("witness check failed: {0}")]
    Witness(String),
    #[error(transparent)]
    Abstraction(#[from] AbsError),
}

/// Finite specification `(X_Q, T_Q, X_Q^0)` over state vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Specification {
    pub names: Vec<String>,
    pub states: Vec<Vec<f64>>,
    pub transitions: BTreeSet<(u32, u32)>,
    pub initial: BTreeSet<u32>,
}

impl Specification {
    pub fn new(
        names: Vec<String>,
        states: Vec<Vec<f64>>,
        transitions: BTreeSet<(u32, u32)>,
        initial: BTreeSet<u32>,
    ) -> Result<Self, SynthError> {
        let n = states.len() as u32;
        if names.len() != states.len() {
            return Err(SynthError::InvalidSpec("one name per state".into()));
        }
        if states.is_empty() || initial.is_empty() {
            return Err(SynthError::InvalidSpec(
                "need at least one state and one initial state".into(),
            ));
        }
        if let Some(d) = states.iter().map(Vec::len).find(|&d| d != states[0].len()) {
            return Err(SynthError::InvalidSpec(format!(
                "state dimension {} differs from {}",
                d,
                states[0].len()
            )));
        }
        if transitions.iter().any(|&(a, b)| a >= n || b >= n) || initial.iter().any(|&i| i >= n) {
            return Err(SynthError::InvalidSpec("index out of range".into()));
        }
        Ok(Specification {
            names,
            states,
            transitions,
            initial,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn successors(&self, i: u32) -> impl Iterator<Item = u32> + '_ {
        self.transitions
            .range((i, 0)..=(i, u32::MAX))
            .map(|&(_, j)| j)
    }
}

/// State of the lifted specification: a bare initial state or a path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpecKey {
    pub initial_form: bool,
    pub path: Vec<u32>,
}

/// The single dummy input of the lifted specification.
pub const U_Q: InputId = 0;

pub type LiftedSpec = FiniteSystem<SpecKey>;

/// Lifts `q` to bursts: states are the initial states and every path of
/// length in `[n_min; n_max]`; a state steps to a path whose first element
/// follows its last element.
pub fn lift_spec(
    q: &Specification,
    n_min: u32,
    n_max: u32,
    budget: usize,
) -> Result<LiftedSpec, SynthError> {
    let mut sys = FiniteSystem::new();
    let out = |path: &[u32]| -> Burst { path.iter().map(|&i| q.states[i as usize].clone()).collect() };
    for &i in &q.initial {
        let id = sys.add_state(
            SpecKey {
                initial_form: true,
                path: vec![i],
            },
            out(&[i]),
        );
        sys.set_initial(id);
    }
    // Paths by length, lexicographic within a length.
    let mut by_first: BTreeMap<u32, Vec<StateId>> = BTreeMap::new();
    let mut layer: Vec<Vec<u32>> = (0..q.len() as u32).map(|i| vec![i]).collect();
    for n in 1..=n_max {
        if n >= n_min {
            for p in &layer {
                let id = sys.add_state(
                    SpecKey {
                        initial_form: false,
                        path: p.clone(),
                    },
                    out(p),
                );
                by_first.entry(p[0]).or_default().push(id);
                if sys.n_states() > budget {
                    return Err(SynthError::CapacityExceeded {
                        count: sys.n_states() as u128,
                        budget: budget as u128,
                    });
                }
            }
        }
        if n < n_max {
            let mut next = Vec::new();
            for p in &layer {
                for j in q.successors(*p.last().unwrap()) {
                    let mut e = p.clone();
                    e.push(j);
                    next.push(e);
                }
            }
            next.sort();
            layer = next;
        }
    }
    sys.add_input(U_Q);
    for s in 0..sys.n_states() as StateId {
        let last = *sys.key(s).path.last().unwrap();
        for j in q.successors(last) {
            if let Some(list) = by_first.get(&j) {
                for &t in list {
                    sys.add_transition(s, U_Q, t);
                }
            }
        }
    }
    Ok(sys)
}

/// One parameter condition with its two sides; `margin = rhs - lhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Condition {
    fn le(name: &'static str, lhs: f64, rhs: f64) -> Self {
        Condition {
            name,
            lhs,
            rhs,
            pass: lhs <= rhs * (1.0 + 1e-12) + 1e-15,
        }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub conditions: Vec<Condition>,
}

impl ParamReport {
    pub fn ok(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Condition> {
        self.conditions.iter().filter(|c| !c.pass).collect()
    }
}

/// Composition conditions `mu_x + theta <= epsilon` and
/// `mu_x <= min(mu_hat, theta)`; for the contracting variant also the
/// abstraction precision condition with `theta` as the precision.
pub fn check_parameters(
    mu_x: f64,
    theta: f64,
    eps: f64,
    mu_hat: f64,
    variant: Variant,
    cert: Option<(&LyapunovCertificate, f64)>,
) -> ParamReport {
    let mut conditions = vec![
        Condition::le("mu_x + theta <= epsilon", mu_x + theta, eps),
        Condition::le("mu_x <= min(mu_hat, theta)", mu_x, libm::fmin(mu_hat, theta)),
    ];
    if variant == Variant::Gas {
        if let Some((c, tau)) = cert {
            conditions.push(Condition::le(
                "lambda < 0",
                c.lambda,
                -f64::MIN_POSITIVE,
            ));
            let need = crate::abstraction::gas_min_epsilon(c, tau, mu_x, 1.0);
            conditions.push(Condition::le(
                "mu_x + alpha_lower^-1((2+e^(lambda tau))/(1-e^(lambda tau)) gamma(mu_x)) <= theta",
                need,
                theta,
            ));
        }
    }
    ParamReport { conditions }
}

/// Controller state: a symbolic state together with the specification class
/// it is tracking. A class is a set of lifted-spec states with identical
/// successor sets, named by its lowest id; all members of a class have the
/// same future, so the game only needs the class.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ControlState<K> {
    pub state: K,
    pub spec: StateId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisOptions {
    /// Maximum number of game nodes (tracking nodes plus match nodes).
    pub pair_budget: usize,
    /// Maximum number of symbolic states expanded.
    pub state_budget: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            pair_budget: 5_000_000,
            state_budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthesisStats {
    pub explored_states: usize,
    /// Tracking nodes `(symbolic state, spec class)`.
    pub explored_pairs: usize,
    /// Match nodes `(successor, spec class)`.
    pub match_nodes: usize,
    pub deleted_pairs: usize,
    pub controller_states: usize,
    pub controller_transitions: usize,
    pub waves: usize,
}

#[derive(Debug, Clone)]
pub struct Synthesis<K> {
    /// The maximal controller over tracking nodes.
    pub controller: FiniteSystem<ControlState<K>>,
    /// Its projection onto symbolic states: a sub-system of `explored`.
    pub projection: FiniteSystem<K>,
    /// The explored part of the symbolic model; every state in the
    /// projection has its complete successor set here.
    pub explored: FiniteSystem<K>,
    /// Initial symbolic states from which no controller exists.
    pub losing_initial: Vec<K>,
    pub stats: SynthesisStats,
}

/// Class representative of every lifted-spec state: the lowest id with the
/// same successor set.
pub fn spec_classes(spec: &LiftedSpec) -> Vec<StateId> {
    let mut first: BTreeMap<&[(InputId, StateId)], StateId> = BTreeMap::new();
    (0..spec.n_states() as StateId)
        .map(|q| *first.entry(spec.post(q)).or_insert(q))
        .collect()
}

/// Successors of one class bucketed by burst length and by the cell of
/// width `2 mu_x` holding their first element, so that every spec burst
/// within `mu_x` of a query lies in one of the `3^n` neighbouring cells.
struct ClassIndex {
    cells: BTreeMap<(usize, Vec<i64>), Vec<StateId>>,
}

fn cell(x: &[f64], w: f64) -> Vec<i64> {
    x.iter().map(|v| libm::floor(v / w) as i64).collect()
}

impl ClassIndex {
    fn new(spec: &LiftedSpec, rep: StateId, w: f64) -> Self {
        let mut cells: BTreeMap<(usize, Vec<i64>), Vec<StateId>> = BTreeMap::new();
        for q in spec.post_u(rep, U_Q) {
            let out = spec.output(q);
            cells.entry((out.len(), cell(&out[0], w))).or_default().push(q);
        }
        ClassIndex { cells }
    }

    fn matches(&self, spec: &LiftedSpec, burst: &Burst, w: f64, mu_x: f64) -> Vec<StateId> {
        let base = cell(&burst[0], w);
        let mut out = Vec::new();
        let mut off = vec![-1i64; base.len()];
        loop {
            let c: Vec<i64> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            if let Some(list) = self.cells.get(&(burst.len(), c)) {
                out.extend(
                    list.iter()
                        .copied()
                        .filter(|&q| burst_distance(burst, spec.output(q)).within(mu_x)),
                );
            }
            let mut i = 0;
            while i < off.len() && off[i] == 1 {
                off[i] = -1;
                i += 1;
            }
            if i == off.len() {
                break;
            }
            off[i] += 1;
        }
        out.sort_unstable();
        out
    }
}

struct Slot {
    u: InputId,
    /// One match node per successor.
    matches: Vec<u32>,
    dead: bool,
}

/// Tracking node `(a, g)`: symbolic state `a` matched against spec class `g`.
struct Track {
    a: StateId,
    g: StateId,
    slots: Vec<Slot>,
    good: u32,
    alive: bool,
    /// Match nodes counting this node, with multiplicity.
    counted_in: Vec<(u32, u32)>,
}

/// Match node `(a2, g)`: the spec successors of class `g` within `mu_x` of
/// `a2`, grouped by the tracking node they lead to.
struct Match {
    partners: Vec<(u32, u32)>,
    live: u32,
    /// Slots waiting on this node.
    users: Vec<(u32, u32)>,
}

/// Product-game synthesis. `seeds` are the initial symbolic states;
/// `expand_wave` maps a slice of symbolic states to their `(input,
/// successor)` lists and may evaluate in parallel.
pub fn synthesize<K, E>(
    seeds: Vec<K>,
    output: impl Fn(&K) -> Burst,
    mut expand_wave: impl FnMut(&[K]) -> Result<Vec<Vec<(InputId, K)>>, E>,
    spec: &LiftedSpec,
    mu_x: f64,
    opts: SynthesisOptions,
) -> Result<Synthesis<K>, E>
where
    K: Ord + Clone + core::fmt::Debug,
    E: From<SynthError>,
{
    let class = spec_classes(spec);
    let width = 2.0 * mu_x * (1.0 + 1e-9) + 1e-12;
    let mut indexes: BTreeMap<StateId, ClassIndex> = BTreeMap::new();
    let mut explored: FiniteSystem<K> = FiniteSystem::new();
    let mut expanded: Vec<bool> = Vec::new();
    let mut tracks: Vec<Track> = Vec::new();
    let mut track_id: BTreeMap<(StateId, StateId), u32> = BTreeMap::new();
    let mut matches: Vec<Match> = Vec::new();
    let mut match_id: BTreeMap<(StateId, StateId), u32> = BTreeMap::new();
    let budget_err = |n: usize| -> E {
        SynthError::CapacityExceeded {
            count: n as u128,
            budget: opts.pair_budget as u128,
        }
        .into()
    };

    fn track_of(
        tracks: &mut Vec<Track>,
        track_id: &mut BTreeMap<(StateId, StateId), u32>,
        a: StateId,
        g: StateId,
    ) -> u32 {
        *track_id.entry((a, g)).or_insert_with(|| {
            tracks.push(Track {
                a,
                g,
                slots: Vec::new(),
                good: 0,
                alive: true,
                counted_in: Vec::new(),
            });
            (tracks.len() - 1) as u32
        })
    }

    let mut seeds = seeds;
    seeds.sort();
    seeds.dedup();
    let mut initial_tracks: BTreeSet<u32> = BTreeSet::new();
    for s in &seeds {
        let id = explored.add_state(s.clone(), output(s));
        explored.set_initial(id);
        expanded.push(false);
        for q in spec.initial_states() {
            if burst_distance(explored.output(id), spec.output(q)).within(mu_x) {
                let t = track_of(&mut tracks, &mut track_id, id, class[q as usize]);
                initial_tracks.insert(t);
            }
        }
    }

    let mut stats = SynthesisStats::default();
    let mut lo = 0usize;
    while lo < tracks.len() {
        let hi = tracks.len();
        stats.waves += 1;
        let mut need: Vec<StateId> = (lo..hi)
            .map(|p| tracks[p].a)
            .filter(|&a| !expanded[a as usize])
            .collect();
        need.sort_unstable();
        need.dedup();
        if explored.n_states() > opts.state_budget {
            return Err(SynthError::CapacityExceeded {
                count: explored.n_states() as u128,
                budget: opts.state_budget as u128,
            }
            .into());
        }
        let keys: Vec<K> = need.iter().map(|&a| explored.key(a).clone()).collect();
        let results = expand_wave(&keys)?;
        for (&a, list) in need.iter().zip(results) {
            for (u, y) in list {
                let before = explored.n_states();
                let out = output(&y);
                let yid = explored.add_state(y, out);
                if explored.n_states() > before {
                    expanded.push(false);
                }
                explored.add_transition(a, u, yid);
            }
            expanded[a as usize] = true;
        }
        for p in lo..hi {
            let (a, g) = (tracks[p].a, tracks[p].g);
            let mut slots = Vec::new();
            'inputs: for u in explored.enabled_inputs(a) {
                let succ: Vec<StateId> = explored.post_u(a, u).collect();
                let mut ms = Vec::with_capacity(succ.len());
                for a2 in succ {
                    let m = match match_id.get(&(a2, g)) {
                        Some(&m) => m,
                        None => {
                            let idx = indexes
                                .entry(g)
                                .or_insert_with(|| ClassIndex::new(spec, g, width));
                            let qs = idx.matches(spec, explored.output(a2), width, mu_x);
                            let mut partners: Vec<(u32, u32)> = Vec::new();
                            for q2 in qs {
                                let t = track_of(&mut tracks, &mut track_id, a2, class[q2 as usize]);
                                match partners.iter_mut().find(|(x, _)| *x == t) {
                                    Some(e) => e.1 += 1,
                                    None => partners.push((t, 1)),
                                }
                            }
                            let m = matches.len() as u32;
                            for &(t, k) in &partners {
                                tracks[t as usize].counted_in.push((m, k));
                            }
                            let live = partners.iter().map(|&(_, k)| k).sum();
                            matches.push(Match {
                                partners,
                                live,
                                users: Vec::new(),
                            });
                            match_id.insert((a2, g), m);
                            if tracks.len() + matches.len() > opts.pair_budget {
                                return Err(budget_err(tracks.len() + matches.len()));
                            }
                            m
                        }
                    };
                    if matches[m as usize].live == 0 {
                        continue 'inputs;
                    }
                    ms.push(m);
                }
                let slot = slots.len() as u32;
                for &m in &ms {
                    matches[m as usize].users.push((p as u32, slot));
                }
                slots.push(Slot {
                    u,
                    matches: ms,
                    dead: false,
                });
            }
            tracks[p].good = slots.len() as u32;
            tracks[p].slots = slots;
        }
        lo = hi;
    }
    stats.explored_states = explored.n_states();
    stats.explored_pairs = tracks.len();
    stats.match_nodes = matches.len();

    // Greatest fixpoint: delete tracking nodes without a good input.
    let mut first_deleted = Vec::new();
    let mut work: VecDeque<u32> = (0..tracks.len() as u32)
        .filter(|&p| tracks[p as usize].good == 0)
        .collect();
    while let Some(p) = work.pop_front() {
        if !tracks[p as usize].alive {
            continue;
        }
        tracks[p as usize].alive = false;
        stats.deleted_pairs += 1;
        if first_deleted.len() < 8 {
            let n = &tracks[p as usize];
            first_deleted.push(format!(
                "{:?} vs spec {:?}",
                explored.key(n.a),
                spec.key(n.g).path
            ));
        }
        let counted = core::mem::take(&mut tracks[p as usize].counted_in);
        for (m, k) in counted {
            let mm = &mut matches[m as usize];
            mm.live -= k;
            if mm.live > 0 {
                continue;
            }
            for &(pp, s) in &mm.users {
                let t = &mut tracks[pp as usize];
                if !t.alive || t.slots[s as usize].dead {
                    continue;
                }
                t.slots[s as usize].dead = true;
                t.good -= 1;
                if t.good == 0 {
                    work.push_back(pp);
                }
            }
        }
    }

    // Controller: surviving tracking nodes reachable from surviving initial
    // ones through good inputs.
    let mut controller: FiniteSystem<ControlState<K>> = FiniteSystem::new();
    let mut projection: FiniteSystem<K> = FiniteSystem::new();
    let mut ids: BTreeMap<u32, StateId> = BTreeMap::new();
    let mut queue: VecDeque<u32> = VecDeque::new();
    let intern = |p: u32,
                  ids: &mut BTreeMap<u32, StateId>,
                  controller: &mut FiniteSystem<ControlState<K>>,
                  projection: &mut FiniteSystem<K>,
                  queue: &mut VecDeque<u32>|
     -> StateId {
        if let Some(&id) = ids.get(&p) {
            return id;
        }
        let n = &tracks[p as usize];
        let key = explored.key(n.a).clone();
        let out = explored.output(n.a).clone();
        let id = controller.add_state(
            ControlState {
                state: key.clone(),
                spec: n.g,
            },
            out.clone(),
        );
        projection.add_state(key, out);
        ids.insert(p, id);
        queue.push_back(p);
        id
    };
    for &p in &initial_tracks {
        if tracks[p as usize].alive {
            let id = intern(p, &mut ids, &mut controller, &mut projection, &mut queue);
            controller.set_initial(id);
            let pid = projection.id_of(explored.key(tracks[p as usize].a)).unwrap();
            projection.set_initial(pid);
        }
    }
    if controller.n_states() == 0 {
        return Err(SynthError::EmptyController {
            explored: tracks.len(),
            first_deleted,
        }
        .into());
    }
    while let Some(p) = queue.pop_front() {
        let src = ids[&p];
        let a = tracks[p as usize].a;
        let psrc = projection.id_of(explored.key(a)).unwrap();
        let mut edges: Vec<(InputId, u32)> = Vec::new();
        for s in tracks[p as usize].slots.iter().filter(|s| !s.dead) {
            for &m in &s.matches {
                for &(t, _) in &matches[m as usize].partners {
                    if tracks[t as usize].alive {
                        edges.push((s.u, t));
                    }
                }
            }
        }
        for (u, t) in edges {
            let dst = intern(t, &mut ids, &mut controller, &mut projection, &mut queue);
            controller.add_transition(src, u, dst);
            let pdst = projection
                .id_of(explored.key(tracks[t as usize].a))
                .unwrap();
            projection.add_transition(psrc, u, pdst);
        }
    }
    for u in explored.inputs().clone() {
        controller.add_input(u);
        projection.add_input(u);
    }
    let losing_initial = seeds
        .into_iter()
        .filter(|s| projection.id_of(s).map_or(true, |i| !projection.is_initial(i)))
        .collect();
    stats.controller_states = controller.n_states();
    stats.controller_transitions = controller.n_transitions();
    Ok(Synthesis {
        controller,
        projection,
        explored,
        losing_initial,
        stats,
    })
}

/// Synthesis against the symbolic model of `abs`, seeded with every lattice
/// point of the initial set, after checking the composition conditions.
pub fn synthesize_abstraction(
    abs: &Abstraction,
    spec: &LiftedSpec,
    opts: SynthesisOptions,
) -> Result<Synthesis<AggregateState>, SynthError> {
    let cfg = abs.config();
    let report = check_parameters(
        cfg.mu_max(),
        cfg.theta,
        cfg.epsilon,
        abs.plant().state_box().mu_hat(),
        cfg.variant,
        Some((abs.certificate(), abs.plant().tau())),
    );
    if !report.ok() {
        let names: Vec<String> = report
            .failures()
            .iter()
            .map(|c| format!("condition {} ({} vs {})", c.name, c.lhs, c.rhs))
            .collect();
        return Err(SynthError::ParameterViolation(names.join("; ")));
    }
    let seeds = abs.initial_states(opts.state_budget)?;
    synthesize(
        seeds,
        |x| abs.output(x),
        |wave| {
            wave.iter()
                .map(|x| abs.expand(x).map_err(SynthError::from))
                .collect()
        },
        spec,
        cfg.mu_max(),
        opts,
    )
}

/// Synthesis against an explicit finite system.
pub fn synthesize_system<K: Ord + Clone + core::fmt::Debug>(
    s: &FiniteSystem<K>,
    spec: &LiftedSpec,
    mu_x: f64,
    opts: SynthesisOptions,
) -> Result<Synthesis<K>, SynthError> {
    let seeds: Vec<K> = s.initial_states().map(|i| s.key(i).clone()).collect();
    synthesize(
        seeds,
        |k| s.output(s.id_of(k).unwrap()).clone(),
        |wave| {
            Ok(wave
                .iter()
                .map(|k| {
                    let id = s.id_of(k).unwrap();
                    s.post(id)
                        .iter()
                        .map(|&(u, d)| (u, s.key(d).clone()))
                        .collect()
                })
                .collect())
        },
        spec,
        mu_x,
        opts,
    )
}

/// The relation witnessing that the controller is `mu_x`-approximately
/// simulated by the lifted specification: each controller state is related
/// to every member of its class within `mu_x` of its output.
pub fn spec_relation<K: Ord + Clone>(
    c: &FiniteSystem<ControlState<K>>,
    spec: &LiftedSpec,
    mu_x: f64,
) -> PairRelation {
    let class = spec_classes(spec);
    let mut members: BTreeMap<StateId, Vec<StateId>> = BTreeMap::new();
    for (q, &g) in class.iter().enumerate() {
        members.entry(g).or_default().push(q as StateId);
    }
    let mut pairs = BTreeSet::new();
    for i in 0..c.n_states() as StateId {
        for &q in members.get(&c.key(i).spec).map_or(&[][..], Vec::as_slice) {
            if burst_distance(c.output(i), spec.output(q)).within(mu_x) {
                pairs.insert((i, q));
            }
        }
    }
    PairRelation {
        pairs,
        epsilon: mu_x,
        flavor: Flavor::ApproxSim,
    }
}

/// Post-hoc witnesses: the controller is non-blocking, its projection is a
/// sub-system of the explored model, it is `mu_x`-approximately simulated by
/// the lifted specification through [`spec_relation`], and strongly
/// alternatingly 0-simulated by the explored model through the map to its
/// symbolic component. The checks exploit that all members of a class share
/// their successors and that the second relation is a function.
pub fn verify_witnesses<K: Ord + Clone>(
    syn: &Synthesis<K>,
    spec: &LiftedSpec,
    mu_x: f64,
) -> Result<(), SynthError> {
    let c = &syn.controller;
    let fail = |m: String| Err(SynthError::Witness(m));
    if !c.is_nonblocking() {
        return fail(format!("controller blocks at {:?}", c.blocking_states()));
    }
    if !crate::tsys::is_subsystem(&syn.projection, &syn.explored) {
        return fail("projection is not a sub-system".into());
    }
    let r = spec_relation(c, spec, mu_x);
    let partners = |i: StateId| {
        r.pairs
            .range((i, 0)..=(i, StateId::MAX))
            .map(|&(_, q)| q)
    };
    for i in 0..c.n_states() as StateId {
        if partners(i).next().is_none() {
            return fail(format!("controller state {} tracks no spec state", i));
        }
        if c.is_initial(i) && !partners(i).any(|q| spec.is_initial(q)) {
            return fail(format!("initial controller state {} has no initial partner", i));
        }
        // Every partner of i has the successors of the class representative.
        let rep = c.key(i).spec;
        for &(_, j) in c.post(i) {
            if !partners(j).any(|q2| spec.has_transition(rep, U_Q, q2)) {
                return fail(format!(
                    "simulation by the specification: transition {} -> {} unmatched",
                    i, j
                ));
            }
        }
    }
    for i in 0..c.n_states() as StateId {
        let e = match syn.explored.id_of(&c.key(i).state) {
            Some(e) => e,
            None => return fail(format!("controller state {} not in the model", i)),
        };
        if c.is_initial(i) && !syn.explored.is_initial(e) {
            return fail(format!("initial controller state {} maps to a non-initial state", i));
        }
        if c.output(i) != syn.explored.output(e) {
            return fail(format!("controller state {} output differs from the model", i));
        }
        for u in c.enabled_inputs(i) {
            let mine: BTreeSet<StateId> = c
                .post_u(i, u)
                .map(|j| syn.explored.id_of(&c.key(j).state).unwrap())
                .collect();
            let mut theirs = syn.explored.post_u(e, u).peekable();
            if theirs.peek().is_none() || !theirs.all(|b| mine.contains(&b)) {
                return fail(format!(
                    "alternating simulation by the model: input {} at controller state {}",
                    u, i
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(points: &[f64], edges: &[(u32, u32)], init: &[u32]) -> Specification {
        Specification::new(
            (0..points.len()).map(|i| format!("q{}", i)).collect(),
            points.iter().map(|&p| vec![p]).collect(),
            edges.iter().copied().collect(),
            init.iter().copied().collect(),
        )
        .unwrap()
    }

    fn paths(s: &LiftedSpec) -> Vec<(bool, Vec<u32>)> {
        s.keys()
            .iter()
            .map(|k| (k.initial_form, k.path.clone()))
            .collect()
    }

    #[test]
    fn lift_self_loop() {
        let q = spec(&[0.0], &[(0, 0)], &[0]);
        let s = lift_spec(&q, 1, 2, 100).unwrap();
        assert_eq!(
            paths(&s),
            vec![(true, vec![0]), (false, vec![0]), (false, vec![0, 0])]
        );
        for a in 0..3 {
            for b in 1..3 {
                assert!(s.has_transition(a, U_Q, b));
            }
            assert!(!s.has_transition(a, U_Q, 0));
        }
    }

    #[test]
    fn lift_three_cycle() {
        let q = spec(&[0.0, 1.0, 2.0], &[(0, 1), (1, 2), (2, 0)], &[0]);
        let s = lift_spec(&q, 1, 2, 100).unwrap();
        assert_eq!(
            paths(&s),
            vec![
                (true, vec![0]),
                (false, vec![0]),
                (false, vec![1]),
                (false, vec![2]),
                (false, vec![0, 1]),
                (false, vec![1, 2]),
                (false, vec![2, 0]),
            ]
        );
        // (a, b) ends in b, so it steps to paths starting at c.
        let ab = s.id_of(&SpecKey { initial_form: false, path: vec![0, 1] }).unwrap();
        let succ: Vec<_> = s.post_u(ab, U_Q).map(|t| s.key(t).path.clone()).collect();
        assert_eq!(succ, vec![vec![2], vec![2, 0]]);
        assert_eq!(s.n_transitions(), 7 * 2);
    }

    #[test]
    fn degenerate_lift_is_the_spec() {
        let q = spec(&[0.0, 1.0, 2.0], &[(0, 1), (1, 2), (2, 0), (1, 1)], &[0, 2]);
        let s = lift_spec(&q, 1, 1, 100).unwrap();
        assert_eq!(s.n_states(), 2 + 3);
        for &(a, b) in &q.transitions {
            let sa = s.id_of(&SpecKey { initial_form: false, path: vec![a] }).unwrap();
            let sb = s.id_of(&SpecKey { initial_form: false, path: vec![b] }).unwrap();
            assert!(s.has_transition(sa, U_Q, sb));
        }
        assert_eq!(s.n_transitions(), 4 + 1 + 1);
    }

    #[test]
    fn lift_budget() {
        let q = spec(&[0.0, 1.0], &[(0, 0), (0, 1), (1, 0), (1, 1)], &[0]);
        assert!(matches!(
            lift_spec(&q, 1, 8, 50),
            Err(SynthError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn parameter_examples() {
        let ok = check_parameters(0.005, 0.0125, 0.02, 1.0, Variant::Fc, None);
        assert!(ok.ok());
        let edge = check_parameters(0.01, 0.01, 0.02, 1.0, Variant::Fc, None);
        assert!(edge.ok());
        let bad = check_parameters(0.02, 0.01, 0.05, 1.0, Variant::Fc, None);
        assert!(!bad.ok());
        assert_eq!(bad.failures()[0].name, "mu_x <= min(mu_hat, theta)");
        assert!((bad.failures()[0].margin() + 0.01).abs() < 1e-15);
    }

    fn point_system(outs: &[f64], init: &[u32], edges: &[(u32, u32, u32)]) -> FiniteSystem<u32> {
        let mut s = FiniteSystem::new();
        for (i, &o) in outs.iter().enumerate() {
            s.add_state(i as u32, vec![vec![o]]);
        }
        for &i in init {
            s.set_initial(i);
        }
        for &(a, u, b) in edges {
            s.add_transition(a, u, b);
        }
        s
    }

    #[test]
    fn fixed_point_controller() {
        // A state held at its fixed point, spec a self-loop there.
        let s = point_system(&[0.0, 0.0], &[0], &[(0, 0, 1), (1, 0, 1)]);
        let q = lift_spec(&spec(&[0.0], &[(0, 0)], &[0]), 1, 1, 100).unwrap();
        let syn = synthesize_system(&s, &q, 0.1, SynthesisOptions::default()).unwrap();
        assert_eq!(syn.controller.n_states(), 2);
        assert!(syn.controller.is_nonblocking());
        verify_witnesses(&syn, &q, 0.1).unwrap();
    }

    #[test]
    fn escaping_delay_realization_empties_controller() {
        // Input 0 may end at 1.0 (outside the spec), input 1 always at 0.
        // State 3 is only reached through input 0, so the spec point 0.5 is
        // unreachable safely; requiring it empties the controller.
        let s = point_system(
            &[0.0, 0.5, 1.0, 0.0],
            &[0],
            &[(0, 0, 1), (0, 0, 2), (0, 1, 3), (1, 0, 1), (3, 0, 3), (2, 0, 2)],
        );
        let q = lift_spec(&spec(&[0.0, 0.5], &[(0, 1), (1, 1)], &[0]), 1, 1, 100).unwrap();
        let err = synthesize_system(&s, &q, 0.1, SynthesisOptions::default()).unwrap_err();
        assert!(matches!(err, SynthError::EmptyController { .. }));
        // Allowing the spec to stay at 0 makes input 1 winning.
        let q = lift_spec(&spec(&[0.0, 0.5], &[(0, 1), (1, 1), (0, 0)], &[0]), 1, 1, 100).unwrap();
        let syn = synthesize_system(&s, &q, 0.1, SynthesisOptions::default()).unwrap();
        assert_eq!(syn.controller.enabled_inputs(0), vec![1]);
        verify_witnesses(&syn, &q, 0.1).unwrap();
    }
}
