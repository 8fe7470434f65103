//! Finite transition systems with burst outputs.
//!
//! States are interned: each distinct key gets a dense integer id in
//! insertion order, and all set and relation algebra runs on ids. Outputs
//! are bursts (sequences of real vectors) compared with [`burst_distance`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

pub type StateId = u32;
pub type InputId = u32;
/// A sequence of real vectors: the output of an aggregate state.
pub type Burst = Vec<Vec<f64>>;

/// Value of the burst pseudometric. Bursts of different lengths are
/// `Incomparable`, which fails every finite precision test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distance {
    Finite(f64),
    Incomparable,
}

impl Distance {
    /// True iff the distance is finite and at most `eps` (with a 1e-12 slack
    /// for representation error).
    pub fn within(self, eps: f64) -> bool {
        match self {
            Distance::Finite(d) => d <= eps + 1e-12,
            Distance::Incomparable => false,
        }
    }
}

/// Maximum over samples of the infinity-norm distance, for equal lengths.
pub fn burst_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Distance {
    if a.len() != b.len() {
        return Distance::Incomparable;
    }
    let mut d: f64 = 0.0;
    for (p, q) in a.iter().zip(b) {
        if p.len() != q.len() {
            return Distance::Incomparable;
        }
        for (x, y) in p.iter().zip(q) {
            d = libm::fmax(d, libm::fabs(x - y));
        }
    }
    Distance::Finite(d)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TsysError {
    #[error("OutputClash: shared state {0} has different outputs in the two systems")]
    OutputClash(String),
    #[error("malformed system text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A finite system `(X, X0, U, ->, Y, H)` over state keys of type `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSystem<K> {
    keys: Vec<K>,
    index: BTreeMap<K, StateId>,
    initial: Vec<bool>,
    inputs: BTreeSet<InputId>,
    post: Vec<Vec<(InputId, StateId)>>,
    outputs: Vec<Burst>,
}

impl<K: Ord + Clone> Default for FiniteSystem<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Ord + Clone> FiniteSystem<K> {
    pub fn new() -> Self {
        FiniteSystem {
            keys: Vec::new(),
            index: BTreeMap::new(),
            initial: Vec::new(),
            inputs: BTreeSet::new(),
            post: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Interns `key`, returning its id. The output of an existing state is
    /// left unchanged.
    pub fn add_state(&mut self, key: K, output: Burst) -> StateId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.keys.len() as StateId;
        self.index.insert(key.clone(), id);
        self.keys.push(key);
        self.initial.push(false);
        self.post.push(Vec::new());
        self.outputs.push(output);
        id
    }

    pub fn set_initial(&mut self, id: StateId) {
        self.initial[id as usize] = true;
    }

    pub fn add_input(&mut self, u: InputId) {
        self.inputs.insert(u);
    }

    /// Adds `src --u--> dst`; duplicates are ignored.
    pub fn add_transition(&mut self, src: StateId, u: InputId, dst: StateId) {
        self.inputs.insert(u);
        let list = &mut self.post[src as usize];
        if let Err(pos) = list.binary_search(&(u, dst)) {
            list.insert(pos, (u, dst));
        }
    }

    pub fn n_states(&self) -> usize {
        self.keys.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.post.iter().map(Vec::len).sum()
    }

    pub fn key(&self, id: StateId) -> &K {
        &self.keys[id as usize]
    }

    pub fn keys(&self) -> &[K] {
        &self.keys
    }

    pub fn id_of(&self, key: &K) -> Option<StateId> {
        self.index.get(key).copied()
    }

    pub fn output(&self, id: StateId) -> &Burst {
        &self.outputs[id as usize]
    }

    pub fn is_initial(&self, id: StateId) -> bool {
        self.initial[id as usize]
    }

    pub fn initial_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.initial
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as StateId)
    }

    pub fn inputs(&self) -> &BTreeSet<InputId> {
        &self.inputs
    }

    /// All outgoing `(input, successor)` pairs, sorted.
    pub fn post(&self, id: StateId) -> &[(InputId, StateId)] {
        &self.post[id as usize]
    }

    /// The `u`-successors of `id`, sorted.
    pub fn post_u(&self, id: StateId, u: InputId) -> impl Iterator<Item = StateId> + '_ {
        let list = &self.post[id as usize];
        let start = list.partition_point(|&(v, _)| v < u);
        list[start..]
            .iter()
            .take_while(move |&&(v, _)| v == u)
            .map(|&(_, d)| d)
    }

    /// Inputs with at least one successor, ascending.
    pub fn enabled_inputs(&self, id: StateId) -> Vec<InputId> {
        let mut out: Vec<InputId> = self.post[id as usize].iter().map(|&(u, _)| u).collect();
        out.dedup();
        out
    }

    pub fn has_transition(&self, src: StateId, u: InputId, dst: StateId) -> bool {
        self.post[src as usize].binary_search(&(u, dst)).is_ok()
    }

    /// Every transition `(src, input, dst)` in canonical order.
    pub fn transitions(&self) -> impl Iterator<Item = (StateId, InputId, StateId)> + '_ {
        self.post
            .iter()
            .enumerate()
            .flat_map(|(s, l)| l.iter().map(move |&(u, d)| (s as StateId, u, d)))
    }

    /// Reverse adjacency: for each state, its `(input, predecessor)` pairs.
    pub fn reverse(&self) -> Vec<Vec<(InputId, StateId)>> {
        let mut pre = alloc::vec![Vec::new(); self.n_states()];
        for (s, u, d) in self.transitions() {
            pre[d as usize].push((u, s));
        }
        for l in &mut pre {
            l.sort_unstable();
        }
        pre
    }

    /// Non-blocking: every state has at least one outgoing transition.
    pub fn is_nonblocking(&self) -> bool {
        self.post.iter().all(|l| !l.is_empty())
    }

    pub fn blocking_states(&self) -> Vec<StateId> {
        (0..self.n_states() as StateId)
            .filter(|&s| self.post[s as usize].is_empty())
            .collect()
    }

    /// Restriction to the states accepted by `keep`, with fresh ids in the
    /// original order. Transitions with a dropped endpoint are dropped.
    pub fn restrict(&self, keep: impl Fn(StateId) -> bool) -> FiniteSystem<K> {
        let mut out = FiniteSystem::new();
        out.inputs = self.inputs.clone();
        let mut map = alloc::vec![None; self.n_states()];
        for s in 0..self.n_states() as StateId {
            if keep(s) {
                let id = out.add_state(self.key(s).clone(), self.output(s).clone());
                if self.is_initial(s) {
                    out.set_initial(id);
                }
                map[s as usize] = Some(id);
            }
        }
        for (s, u, d) in self.transitions() {
            if let (Some(a), Some(b)) = (map[s as usize], map[d as usize]) {
                out.add_transition(a, u, b);
            }
        }
        out
    }
}

/// `s1` is a sub-system of `s2`: states, initial states, inputs and
/// transitions are included (matched by key) and outputs agree.
pub fn is_subsystem<K: Ord + Clone>(s1: &FiniteSystem<K>, s2: &FiniteSystem<K>) -> bool {
    if !s1.inputs.is_subset(&s2.inputs) {
        return false;
    }
    let mut map = Vec::with_capacity(s1.n_states());
    for s in 0..s1.n_states() as StateId {
        let Some(t) = s2.id_of(s1.key(s)) else {
            return false;
        };
        if s1.output(s) != s2.output(t) || (s1.is_initial(s) && !s2.is_initial(t)) {
            return false;
        }
        map.push(t);
    }
    s1.transitions()
        .all(|(s, u, d)| s2.has_transition(map[s as usize], u, map[d as usize]))
}

/// Componentwise union. States are matched by key; the result lists the
/// states of `s1` first, then the new states of `s2`.
pub fn union<K: Ord + Clone + core::fmt::Debug>(
    s1: &FiniteSystem<K>,
    s2: &FiniteSystem<K>,
) -> Result<FiniteSystem<K>, TsysError> {
    let mut out = s1.clone();
    for u in &s2.inputs {
        out.add_input(*u);
    }
    let mut map = Vec::with_capacity(s2.n_states());
    for s in 0..s2.n_states() as StateId {
        let key = s2.key(s);
        if let Some(t) = out.id_of(key) {
            if out.output(t) != s2.output(s) {
                return Err(TsysError::OutputClash(format!("{:?}", key)));
            }
        }
        let id = out.add_state(key.clone(), s2.output(s).clone());
        if s2.is_initial(s) {
            out.set_initial(id);
        }
        map.push(id);
    }
    for (s, u, d) in s2.transitions() {
        out.add_transition(map[s as usize], u, map[d as usize]);
    }
    Ok(out)
}

/// Same states (by key), initial states, inputs, transitions and outputs,
/// irrespective of id assignment.
pub fn same_system<K: Ord + Clone>(a: &FiniteSystem<K>, b: &FiniteSystem<K>) -> bool {
    a.n_states() == b.n_states()
        && a.n_transitions() == b.n_transitions()
        && is_subsystem(a, b)
        && is_subsystem(b, a)
}

fn write_burst(out: &mut String, burst: &Burst) {
    for (i, p) in burst.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        for (j, v) in p.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", v);
        }
    }
}

/// Line-oriented text form: a header with state decodings, then one
/// `src input dst` line per transition.
pub fn to_text<K: Ord + Clone>(s: &FiniteSystem<K>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ncs-system v1");
    let _ = writeln!(out, "states {}", s.n_states());
    out.push_str("inputs");
    for u in s.inputs() {
        let _ = write!(out, " {}", u);
    }
    out.push('\n');
    for id in 0..s.n_states() as StateId {
        let _ = write!(out, "state {} {} ", id, s.is_initial(id) as u8);
        write_burst(&mut out, s.output(id));
        out.push('\n');
    }
    let _ = writeln!(out, "transitions {}", s.n_transitions());
    for (a, u, b) in s.transitions() {
        let _ = writeln!(out, "{} {} {}", a, u, b);
    }
    out
}

fn parse_burst(text: &str, line: usize) -> Result<Burst, TsysError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(';')
        .map(|p| {
            p.split(',')
                .map(|v| {
                    v.parse::<f64>().map_err(|_| TsysError::Parse {
                        line,
                        msg: format!("bad number {:?}", v),
                    })
                })
                .collect()
        })
        .collect()
}

/// Parses [`to_text`] output; state keys become the written ids.
pub fn from_text(text: &str) -> Result<FiniteSystem<StateId>, TsysError> {
    let err = |line: usize, msg: &str| TsysError::Parse {
        line,
        msg: String::from(msg),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, what));
    let (ln, l) = next("missing header")?;
    if l.trim() != "ncs-system v1" {
        return Err(err(ln, "expected header `ncs-system v1`"));
    }
    let (ln, l) = next("missing state count")?;
    let n: usize = l
        .strip_prefix("states ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(ln, "expected `states <n>`"))?;
    let (ln, l) = next("missing input list")?;
    let inputs: Vec<InputId> = l
        .strip_prefix("inputs")
        .ok_or_else(|| err(ln, "expected `inputs ...`"))?
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| err(ln, "bad input id")))
        .collect::<Result<_, _>>()?;
    let mut sys = FiniteSystem::new();
    for u in inputs {
        sys.add_input(u);
    }
    for expect in 0..n {
        let (ln, l) = next("missing state line")?;
        let mut parts = l.splitn(4, ' ');
        if parts.next() != Some("state") {
            return Err(err(ln, "expected `state`"));
        }
        let id: usize = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(ln, "bad state id"))?;
        if id != expect {
            return Err(err(ln, "state ids must be consecutive"));
        }
        let init = match parts.next() {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(err(ln, "bad initial flag")),
        };
        let burst = parse_burst(parts.next().unwrap_or("").trim(), ln)?;
        let sid = sys.add_state(id as StateId, burst);
        if init {
            sys.set_initial(sid);
        }
    }
    let (ln, l) = next("missing transition count")?;
    let m: usize = l
        .strip_prefix("transitions ")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| err(ln, "expected `transitions <m>`"))?;
    for _ in 0..m {
        let (ln, l) = next("missing transition line")?;
        let v: Vec<u32> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(ln, "bad transition field")))
            .collect::<Result<_, _>>()?;
        if v.len() != 3 || v[0] as usize >= n || v[2] as usize >= n {
            return Err(err(ln, "expected `src input dst` with known states"));
        }
        sys.add_transition(v[0], v[1], v[2]);
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn pt(v: f64) -> Burst {
        vec![vec![v]]
    }

    fn chain() -> FiniteSystem<u32> {
        let mut s = FiniteSystem::new();
        let a = s.add_state(0, pt(0.0));
        let b = s.add_state(1, pt(1.0));
        let c = s.add_state(2, pt(2.0));
        s.set_initial(a);
        s.add_transition(a, 0, b);
        s.add_transition(b, 0, c);
        s.add_transition(c, 1, c);
        s.add_transition(a, 1, c);
        s
    }

    #[test]
    fn distance_examples() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![0.3, -0.4]];
        assert_eq!(burst_distance(&a, &a), Distance::Finite(0.0));
        assert_eq!(burst_distance(&a, &b), Distance::Finite(0.4));
        let c = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let d = vec![vec![0.0, 0.0]; 3];
        assert_eq!(burst_distance(&c, &d), Distance::Incomparable);
        assert!(!Distance::Incomparable.within(f64::MAX));
    }

    #[test]
    fn post_and_enabled_inputs() {
        let s = chain();
        assert_eq!(s.post_u(0, 0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(s.post_u(0, 1).collect::<Vec<_>>(), vec![2]);
        assert_eq!(s.post_u(1, 1).count(), 0);
        assert_eq!(s.enabled_inputs(0), vec![0, 1]);
        assert_eq!(s.reverse()[2], vec![(0, 1), (1, 0), (1, 2)]);
        assert!(s.is_nonblocking());
    }

    #[test]
    fn blocking_examples() {
        let mut s = FiniteSystem::new();
        let a = s.add_state(0u32, pt(0.0));
        assert!(!s.is_nonblocking());
        s.add_transition(a, 0, a);
        assert!(s.is_nonblocking());
        s.add_state(1, pt(1.0));
        assert!(!s.is_nonblocking());
        assert_eq!(s.blocking_states(), vec![1]);
    }

    #[test]
    fn subsystem_and_union() {
        let s = chain();
        assert!(is_subsystem(&s, &s));
        let mut smaller = FiniteSystem::new();
        for id in 0..3 {
            let i = smaller.add_state(id, pt(id as f64));
            if id == 0 {
                smaller.set_initial(i);
            }
        }
        smaller.add_transition(0, 0, 1);
        assert!(is_subsystem(&smaller, &s));
        smaller.add_transition(1, 1, 0);
        assert!(!is_subsystem(&smaller, &s));
        let u = union(&s, &smaller).unwrap();
        assert!(is_subsystem(&s, &u) && is_subsystem(&smaller, &u));
        assert!(same_system(&union(&s, &s).unwrap(), &s));
        let mut clash = FiniteSystem::new();
        clash.add_state(1u32, pt(5.0));
        assert!(matches!(union(&s, &clash), Err(TsysError::OutputClash(_))));
    }

    #[test]
    fn text_round_trip() {
        let s = chain();
        let text = to_text(&s);
        let back = from_text(&text).unwrap();
        assert_eq!(to_text(&back), text);
        assert!(from_text("nope").is_err());
    }
}
