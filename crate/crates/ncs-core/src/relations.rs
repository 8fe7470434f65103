//! Approximate simulation relations between finite systems.
//!
//! Four flavors are supported: plain approximate simulation, the alternating
//! variant, the strong alternating variant (equal input labels) and its
//! two-sided bisimulation closure. Largest relations are computed as greatest
//! fixpoints with a worklist keyed by predecessor pairs.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::tsys::{burst_distance, FiniteSystem, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Flavor {
    ApproxSim,
    AltApproxSim,
    StrongAltSim,
    StrongAltBisim,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::ApproxSim => "approx-sim",
            Flavor::AltApproxSim => "alt-approx-sim",
            Flavor::StrongAltSim => "strong-alt-sim",
            Flavor::StrongAltBisim => "strong-alt-bisim",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Flavor::ApproxSim,
            Flavor::AltApproxSim,
            Flavor::StrongAltSim,
            Flavor::StrongAltBisim,
        ]
        .into_iter()
        .find(|f| f.name() == s)
    }

    fn is_strong(self) -> bool {
        matches!(self, Flavor::StrongAltSim | Flavor::StrongAltBisim)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelationError {
    #[error("ABSENT: initial states {uncovered:?} are not related to any initial state")]
    Absent {
        uncovered: Vec<StateId>,
        /// True when the uncovered states belong to the second system
        /// (reverse direction of a bisimulation).
        reverse: bool,
    },
    #[error("RelationFlavorMismatch: {0} and {1}")]
    RelationFlavorMismatch(&'static str, &'static str),
    #[error("pair ({0}, {1}) violates the output condition")]
    OutputViolation(StateId, StateId),
    #[error("pair ({0}, {1}) violates the transfer condition")]
    TransferViolation(StateId, StateId),
    #[error("malformed relation text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A relation between the states of two systems with its precision.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRelation {
    pub pairs: BTreeSet<(StateId, StateId)>,
    pub epsilon: f64,
    pub flavor: Flavor,
}

impl PairRelation {
    pub fn contains(&self, a: StateId, b: StateId) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Identity on `n` states.
    pub fn identity(n: usize, flavor: Flavor) -> Self {
        PairRelation {
            pairs: (0..n as StateId).map(|i| (i, i)).collect(),
            epsilon: 0.0,
            flavor,
        }
    }

    pub fn inverse(&self) -> PairRelation {
        PairRelation {
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
            epsilon: self.epsilon,
            flavor: self.flavor,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncs-relation v1");
        let _ = writeln!(out, "flavor {}", self.flavor.name());
        let _ = writeln!(out, "epsilon {}", self.epsilon);
        let _ = writeln!(out, "pairs {}", self.pairs.len());
        for (a, b) in &self.pairs {
            let _ = writeln!(out, "{} {}", a, b);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RelationError> {
        let err = |line, msg: &str| RelationError::Parse {
            line,
            msg: String::from(msg),
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < 4 || lines[0].trim() != "ncs-relation v1" {
            return Err(err(1, "expected header `ncs-relation v1`"));
        }
        let flavor = lines[1]
            .strip_prefix("flavor ")
            .and_then(|f| Flavor::from_name(f.trim()))
            .ok_or_else(|| err(2, "bad flavor"))?;
        let epsilon = lines[2]
            .strip_prefix("epsilon ")
            .and_then(|e| e.trim().parse().ok())
            .ok_or_else(|| err(3, "bad epsilon"))?;
        let n: usize = lines[3]
            .strip_prefix("pairs ")
            .and_then(|e| e.trim().parse().ok())
            .ok_or_else(|| err(4, "bad pair count"))?;
        if lines.len() != 4 + n {
            return Err(err(lines.len(), "pair count does not match"));
        }
        let mut pairs = BTreeSet::new();
        for (i, l) in lines[4..].iter().enumerate() {
            let v: Vec<StateId> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(i + 5, "bad state id")))
                .collect::<Result<_, _>>()?;
            if v.len() != 2 {
                return Err(err(i + 5, "expected two ids"));
            }
            pairs.insert((v[0], v[1]));
        }
        Ok(PairRelation {
            pairs,
            epsilon,
            flavor,
        })
    }
}

/// One-directional transfer condition of `flavor` for the pair `(a, b)`,
/// with membership in the current relation given by `rel`.
fn transfer<K1: Ord + Clone, K2: Ord + Clone>(
    flavor: Flavor,
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    a: StateId,
    b: StateId,
    rel: &dyn Fn(StateId, StateId) -> bool,
) -> bool {
    match flavor {
        Flavor::ApproxSim => s1
            .post(a)
            .iter()
            .all(|&(_, a2)| s2.post(b).iter().any(|&(_, b2)| rel(a2, b2))),
        Flavor::AltApproxSim => s1.enabled_inputs(a).into_iter().all(|u1| {
            s2.enabled_inputs(b).into_iter().any(|u2| {
                s2.post_u(b, u2)
                    .all(|b2| s1.post_u(a, u1).any(|a2| rel(a2, b2)))
            })
        }),
        Flavor::StrongAltSim | Flavor::StrongAltBisim => {
            s1.enabled_inputs(a).into_iter().all(|u| {
                s2.post_u(b, u).next().is_some()
                    && s2.post_u(b, u).all(|b2| s1.post_u(a, u).any(|a2| rel(a2, b2)))
            })
        }
    }
}

fn pair_holds<K1: Ord + Clone, K2: Ord + Clone>(
    flavor: Flavor,
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    a: StateId,
    b: StateId,
    rel: &dyn Fn(StateId, StateId) -> bool,
) -> bool {
    transfer(flavor, s1, s2, a, b, rel)
        && (flavor != Flavor::StrongAltBisim
            || transfer(flavor, s2, s1, b, a, &|x, y| rel(y, x)))
}

fn output_ok<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    a: StateId,
    b: StateId,
    eps: f64,
) -> bool {
    burst_distance(s1.output(a), s2.output(b)).within(eps)
}

fn coverage<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    rel: &dyn Fn(StateId, StateId) -> bool,
) -> Vec<StateId> {
    s1.initial_states()
        .filter(|&a| !s2.initial_states().any(|b| rel(a, b)))
        .collect()
}

/// Largest relation of the given flavor from `s1` to `s2` at precision
/// `eps`, or `Absent` when it does not relate every initial state.
pub fn largest<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    eps: f64,
    flavor: Flavor,
) -> Result<PairRelation, RelationError> {
    let (n1, n2) = (s1.n_states(), s2.n_states());
    let mut alive = alloc::vec![false; n1 * n2];
    let idx = |a: StateId, b: StateId| a as usize * n2 + b as usize;
    for a in 0..n1 as StateId {
        for b in 0..n2 as StateId {
            alive[idx(a, b)] = output_ok(s1, s2, a, b, eps);
        }
    }
    let pre1 = s1.reverse();
    let pre2 = s2.reverse();
    let mut queued = alive.clone();
    let mut work: VecDeque<(StateId, StateId)> = (0..n1 as StateId)
        .flat_map(|a| (0..n2 as StateId).map(move |b| (a, b)))
        .filter(|&(a, b)| alive[idx(a, b)])
        .collect();
    while let Some((a, b)) = work.pop_front() {
        queued[idx(a, b)] = false;
        if !alive[idx(a, b)] {
            continue;
        }
        let holds = {
            let al = &alive;
            pair_holds(flavor, s1, s2, a, b, &|x, y| al[idx(x, y)])
        };
        if holds {
            continue;
        }
        alive[idx(a, b)] = false;
        for &(_, p) in &pre1[a as usize] {
            for &(_, q) in &pre2[b as usize] {
                let k = idx(p, q);
                if alive[k] && !queued[k] {
                    queued[k] = true;
                    work.push_back((p, q));
                }
            }
        }
    }
    let rel = |x: StateId, y: StateId| alive[idx(x, y)];
    let uncovered = coverage(s1, s2, &rel);
    if !uncovered.is_empty() {
        return Err(RelationError::Absent {
            uncovered,
            reverse: false,
        });
    }
    if flavor == Flavor::StrongAltBisim {
        let uncovered = coverage(s2, s1, &|x, y| rel(y, x));
        if !uncovered.is_empty() {
            return Err(RelationError::Absent {
                uncovered,
                reverse: true,
            });
        }
    }
    Ok(PairRelation {
        pairs: (0..n1 as StateId)
            .flat_map(|a| (0..n2 as StateId).map(move |b| (a, b)))
            .filter(|&(a, b)| rel(a, b))
            .collect(),
        epsilon: eps,
        flavor,
    })
}

pub fn largest_approx_sim<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    eps: f64,
) -> Result<PairRelation, RelationError> {
    largest(s1, s2, eps, Flavor::ApproxSim)
}

pub fn largest_alt_sim<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    eps: f64,
) -> Result<PairRelation, RelationError> {
    largest(s1, s2, eps, Flavor::AltApproxSim)
}

pub fn largest_strong_alt_sim<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    eps: f64,
) -> Result<PairRelation, RelationError> {
    largest(s1, s2, eps, Flavor::StrongAltSim)
}

pub fn strong_alt_bisim<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    eps: f64,
) -> Result<PairRelation, RelationError> {
    largest(s1, s2, eps, Flavor::StrongAltBisim)
}

/// Checks that `r` satisfies every condition of its flavor (coverage,
/// output closeness, transfer; both directions for bisimulations).
pub fn check_relation<K1: Ord + Clone, K2: Ord + Clone>(
    s1: &FiniteSystem<K1>,
    s2: &FiniteSystem<K2>,
    r: &PairRelation,
) -> Result<(), RelationError> {
    let rel = |a: StateId, b: StateId| r.pairs.contains(&(a, b));
    let uncovered = coverage(s1, s2, &rel);
    if !uncovered.is_empty() {
        return Err(RelationError::Absent {
            uncovered,
            reverse: false,
        });
    }
    if r.flavor == Flavor::StrongAltBisim {
        let uncovered = coverage(s2, s1, &|x, y| rel(y, x));
        if !uncovered.is_empty() {
            return Err(RelationError::Absent {
                uncovered,
                reverse: true,
            });
        }
    }
    for &(a, b) in &r.pairs {
        if (a as usize) >= s1.n_states()
            || (b as usize) >= s2.n_states()
            || !output_ok(s1, s2, a, b, r.epsilon)
        {
            return Err(RelationError::OutputViolation(a, b));
        }
        if !pair_holds(r.flavor, s1, s2, a, b, &rel) {
            return Err(RelationError::TransferViolation(a, b));
        }
    }
    Ok(())
}

/// Relational composition; precisions add.
pub fn compose(rab: &PairRelation, rbc: &PairRelation) -> Result<PairRelation, RelationError> {
    let flavor = match (rab.flavor, rbc.flavor) {
        (x, y) if x == y => x,
        (x, y) if x.is_strong() && y.is_strong() => Flavor::StrongAltSim,
        (x, y) => return Err(RelationError::RelationFlavorMismatch(x.name(), y.name())),
    };
    let mut pairs = BTreeSet::new();
    for &(a, b) in &rab.pairs {
        for &(b2, c) in rbc.pairs.range((b, 0)..=(b, StateId::MAX)) {
            debug_assert_eq!(b, b2);
            pairs.insert((a, c));
        }
    }
    Ok(PairRelation {
        pairs,
        epsilon: rab.epsilon + rbc.epsilon,
        flavor,
    })
}

/// Product of a plant system and a controller system through a strong
/// alternating relation `r` from the controller to the plant. States are the
/// pairs `(plant, ctrl)` of the inverse relation, keyed by their ids.
pub fn feedback_compose<K1: Ord + Clone, K2: Ord + Clone>(
    s_plant: &FiniteSystem<K1>,
    s_ctrl: &FiniteSystem<K2>,
    r: &PairRelation,
) -> Result<FiniteSystem<(StateId, StateId)>, RelationError> {
    if !r.flavor.is_strong() {
        return Err(RelationError::RelationFlavorMismatch(
            r.flavor.name(),
            Flavor::StrongAltSim.name(),
        ));
    }
    let mut out = FiniteSystem::new();
    for u in s_plant.inputs() {
        out.add_input(*u);
    }
    for &(c, p) in &r.pairs {
        let id = out.add_state((p, c), s_plant.output(p).clone());
        if s_plant.is_initial(p) && s_ctrl.is_initial(c) {
            out.set_initial(id);
        }
    }
    for &(c, p) in &r.pairs {
        let src = out.id_of(&(p, c)).expect("interned above");
        for &(u, p2) in s_plant.post(p) {
            for c2 in s_ctrl.post_u(c, u) {
                if let Some(dst) = out.id_of(&(p2, c2)) {
                    out.add_transition(src, u, dst);
                }
            }
        }
    }
    Ok(out)
}

/// Projection relation from a feedback product onto its controller factor.
pub fn projection_to_ctrl(
    product: &FiniteSystem<(StateId, StateId)>,
    eps: f64,
) -> PairRelation {
    PairRelation {
        pairs: (0..product.n_states() as StateId)
            .map(|i| (i, product.key(i).1))
            .collect(),
        epsilon: eps,
        flavor: Flavor::ApproxSim,
    }
}

/// Human-readable summary of a relation check failure.
pub fn describe(e: &RelationError) -> String {
    format!("{}", e)
}
