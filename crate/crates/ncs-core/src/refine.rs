//! Mealy-machine refinement of a synthesized controller.
//!
//! A controller state `xi` accepts a measurement `w` only if `w` equals the
//! last element of its burst. It then emits the selected input and offers
//! the successors under that input; the loop picks the one whose burst
//! length and last element match what is observed next.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::AggregateState;
use crate::plant::LatticePoint;
use crate::synthesis::ControlState;
use crate::tsys::{FiniteSystem, InputId, StateId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("BlockingController: state {0} has no enabled input")]
    BlockingController(StateId),
    #[error("OutsideDomain: state {state} predicts {expected:?}, measured {got:?}")]
    OutsideDomain {
        state: StateId,
        expected: LatticePoint,
        got: LatticePoint,
    },
    #[error("no successor of state {state} has burst length {n} ending at {w:?}")]
    NoMatchingSuccessor {
        state: StateId,
        n: u32,
        w: LatticePoint,
    },
    #[error("no initial controller state for measurement {0:?}")]
    NoInitialState(LatticePoint),
    #[error("malformed controller text at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// How `h_C` picks among the inputs that survived synthesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectionPolicy {
    /// Lowest input id.
    FirstCanonical,
    /// Uniform choice per state, reproducible from the seed.
    Random(u64),
    /// First listed input that is enabled, else the lowest.
    Priority(Vec<InputId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtrlState {
    pub initial_form: bool,
    pub held: InputId,
    pub burst: Vec<LatticePoint>,
    /// Tracked lifted-specification state.
    pub spec: StateId,
}

impl CtrlState {
    pub fn last(&self) -> &LatticePoint {
        self.burst.last().expect("bursts are nonempty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MealyController {
    pub mu_x: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub n_min: u32,
    pub n_max: u32,
    pub states: Vec<CtrlState>,
    pub initial: Vec<StateId>,
    /// `h_C`, one input per state (independent of `w` on the domain).
    pub selector: Vec<InputId>,
    /// `f_C`: successors under the selected input, ascending ids.
    pub successors: Vec<Vec<StateId>>,
}

/// Builds the Mealy machine of a synthesized controller.
pub fn refine(
    sc: &FiniteSystem<ControlState<AggregateState>>,
    mu_x: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    n_bounds: (u32, u32),
    policy: &SelectionPolicy,
) -> Result<MealyController, RefineError> {
    let mut rng = match policy {
        SelectionPolicy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut selector = Vec::with_capacity(sc.n_states());
    let mut successors = Vec::with_capacity(sc.n_states());
    for s in 0..sc.n_states() as StateId {
        let enabled = sc.enabled_inputs(s);
        if enabled.is_empty() {
            return Err(RefineError::BlockingController(s));
        }
        let u = match policy {
            SelectionPolicy::FirstCanonical => enabled[0],
            SelectionPolicy::Random(_) => {
                let r = rng.as_mut().unwrap();
                enabled[r.gen_range(0..enabled.len())]
            }
            SelectionPolicy::Priority(list) => list
                .iter()
                .copied()
                .find(|u| enabled.contains(u))
                .unwrap_or(enabled[0]),
        };
        selector.push(u);
        successors.push(sc.post_u(s, u).collect());
    }
    let states = sc
        .keys()
        .iter()
        .map(|k| CtrlState {
            initial_form: k.state.initial_form,
            held: k.state.held,
            burst: k.state.burst.clone(),
            spec: k.spec,
        })
        .collect();
    Ok(MealyController {
        mu_x,
        inputs,
        n_min: n_bounds.0,
        n_max: n_bounds.1,
        states,
        initial: sc.initial_states().collect(),
        selector,
        successors,
    })
}

impl MealyController {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Domain rule: the measurement equals the last burst element.
    pub fn in_domain(&self, xi: StateId, w: &[i64]) -> bool {
        self.states[xi as usize].last().as_slice() == w
    }

    /// `(h_C(xi, w), f_C(xi, w))`.
    pub fn step(&self, xi: StateId, w: &[i64]) -> Result<(InputId, &[StateId]), RefineError> {
        if !self.in_domain(xi, w) {
            return Err(RefineError::OutsideDomain {
                state: xi,
                expected: self.states[xi as usize].last().clone(),
                got: w.to_vec(),
            });
        }
        Ok((self.selector[xi as usize], &self.successors[xi as usize]))
    }

    /// Lowest-id initial state whose single element is `w`.
    pub fn initial_state(&self, w: &[i64]) -> Result<StateId, RefineError> {
        self.initial
            .iter()
            .copied()
            .find(|&i| self.states[i as usize].burst[0].as_slice() == w)
            .ok_or_else(|| RefineError::NoInitialState(w.to_vec()))
    }

    /// Lowest-id successor of `xi` with burst length `n` ending at `w_next`.
    pub fn next_state(&self, xi: StateId, n: u32, w_next: &[i64]) -> Result<StateId, RefineError> {
        self.successors[xi as usize]
            .iter()
            .copied()
            .find(|&s| {
                let st = &self.states[s as usize];
                st.burst.len() == n as usize && st.last().as_slice() == w_next
            })
            .ok_or_else(|| RefineError::NoMatchingSuccessor {
                state: xi,
                n,
                w: w_next.to_vec(),
            })
    }

    /// Exhaustive sweep of the domain against the synthesized controller:
    /// every selected input is enabled and the successor map equals its
    /// post set. Returns the number of domain pairs checked.
    pub fn check_against(
        &self,
        sc: &FiniteSystem<ControlState<AggregateState>>,
    ) -> Result<usize, String> {
        if sc.n_states() != self.n_states() {
            return Err("state count differs".into());
        }
        for s in 0..self.n_states() as StateId {
            let w = self.states[s as usize].last().clone();
            let (u, next) = self.step(s, &w).map_err(|e| format!("{}", e))?;
            if !sc.enabled_inputs(s).contains(&u) {
                return Err(format!("state {}: selected input {} not enabled", s, u));
            }
            let post: Vec<StateId> = sc.post_u(s, u).collect();
            if post.as_slice() != next || next.is_empty() {
                return Err(format!("state {}: successor map differs from post set", s));
            }
        }
        Ok(self.n_states())
    }

    /// Versioned line-oriented serialization.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncs-controller v1");
        out.push_str("mu");
        for m in &self.mu_x {
            let _ = write!(out, " {}", m);
        }
        out.push('\n');
        let _ = writeln!(out, "n_bounds {} {}", self.n_min, self.n_max);
        let _ = writeln!(out, "inputs {}", self.inputs.len());
        for (i, u) in self.inputs.iter().enumerate() {
            let _ = write!(out, "input {}", i);
            for v in u {
                let _ = write!(out, " {}", v);
            }
            out.push('\n');
        }
        let _ = writeln!(out, "states {}", self.states.len());
        for (i, s) in self.states.iter().enumerate() {
            let init = self.initial.binary_search(&(i as StateId)).is_ok();
            let _ = write!(
                out,
                "state {} {} {} {} {} ",
                i, init as u8, s.initial_form as u8, s.held, s.spec
            );
            for (j, k) in s.burst.iter().enumerate() {
                if j > 0 {
                    out.push(';');
                }
                for (c, v) in k.iter().enumerate() {
                    if c > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{}", v);
                }
            }
            out.push('\n');
        }
        for (i, (u, next)) in self.selector.iter().zip(&self.successors).enumerate() {
            let _ = write!(out, "select {} {} :", i, u);
            for n in next {
                let _ = write!(out, " {}", n);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RefineError> {
        let err = |line: usize, msg: &str| RefineError::Parse {
            line,
            msg: String::from(msg),
        };
        let lines: Vec<&str> = text.lines().collect();
        let mut at = 0usize;
        let mut next = |what: &str| -> Result<(usize, &str), RefineError> {
            let l = lines.get(at).copied().ok_or_else(|| err(at + 1, what))?;
            at += 1;
            Ok((at, l))
        };
        let (ln, l) = next("missing header")?;
        if l.trim() != "ncs-controller v1" {
            return Err(err(ln, "expected header `ncs-controller v1`"));
        }
        fn nums<T: core::str::FromStr>(s: &str, ln: usize) -> Result<Vec<T>, RefineError> {
            s.split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| RefineError::Parse {
                        line: ln,
                        msg: format!("bad number {:?}", t),
                    })
                })
                .collect()
        }
        let (ln, l) = next("missing mu")?;
        let mu_x: Vec<f64> = nums(l.strip_prefix("mu").ok_or_else(|| err(ln, "expected mu"))?, ln)?;
        let (ln, l) = next("missing n_bounds")?;
        let nb: Vec<u32> = nums(
            l.strip_prefix("n_bounds").ok_or_else(|| err(ln, "expected n_bounds"))?,
            ln,
        )?;
        if nb.len() != 2 {
            return Err(err(ln, "expected two bounds"));
        }
        let (ln, l) = next("missing inputs")?;
        let ni: Vec<usize> = nums(l.strip_prefix("inputs").ok_or_else(|| err(ln, "expected inputs"))?, ln)?;
        let mut inputs = Vec::new();
        for i in 0..*ni.first().ok_or_else(|| err(ln, "input count"))? {
            let (ln, l) = next("missing input")?;
            let v: Vec<f64> = nums(l.strip_prefix("input").ok_or_else(|| err(ln, "expected input"))?, ln)?;
            if v.first().copied() != Some(i as f64) {
                return Err(err(ln, "input ids must be consecutive"));
            }
            inputs.push(v[1..].to_vec());
        }
        let (ln, l) = next("missing states")?;
        let ns: Vec<usize> = nums(l.strip_prefix("states").ok_or_else(|| err(ln, "expected states"))?, ln)?;
        let ns = *ns.first().ok_or_else(|| err(ln, "state count"))?;
        let mut states = Vec::with_capacity(ns);
        let mut initial = Vec::new();
        for i in 0..ns {
            let (ln, l) = next("missing state")?;
            let mut parts = l.splitn(7, ' ');
            if parts.next() != Some("state") {
                return Err(err(ln, "expected state"));
            }
            let head: Vec<u32> = (0..5)
                .map(|_| {
                    parts
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err(ln, "bad state field"))
                })
                .collect::<Result<_, _>>()?;
            if head[0] as usize != i {
                return Err(err(ln, "state ids must be consecutive"));
            }
            if head[1] == 1 {
                initial.push(i as StateId);
            }
            let burst = parts
                .next()
                .ok_or_else(|| err(ln, "missing burst"))?
                .trim()
                .split(';')
                .map(|p| {
                    p.split(',')
                        .map(|v| v.parse::<i64>().map_err(|_| err(ln, "bad lattice index")))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            states.push(CtrlState {
                initial_form: head[2] == 1,
                held: head[3],
                spec: head[4],
                burst,
            });
        }
        let mut selector = Vec::with_capacity(ns);
        let mut successors = Vec::with_capacity(ns);
        for i in 0..ns {
            let (ln, l) = next("missing select")?;
            let (head, tail) = l.split_once(':').ok_or_else(|| err(ln, "expected `:`"))?;
            let h: Vec<u32> = nums(head.strip_prefix("select").ok_or_else(|| err(ln, "expected select"))?, ln)?;
            if h.len() != 2 || h[0] as usize != i {
                return Err(err(ln, "bad select line"));
            }
            selector.push(h[1]);
            let succ: Vec<StateId> = nums(tail, ln)?;
            if succ.iter().any(|&s| s as usize >= ns) {
                return Err(err(ln, "successor out of range"));
            }
            successors.push(succ);
        }
        Ok(MealyController {
            mu_x,
            inputs,
            n_min: nb[0],
            n_max: nb[1],
            states,
            initial,
            selector,
            successors,
        })
    }

    /// Index from a lattice point to the controller states ending there.
    pub fn by_last(&self) -> BTreeMap<LatticePoint, Vec<StateId>> {
        let mut m: BTreeMap<LatticePoint, Vec<StateId>> = BTreeMap::new();
        for (i, s) in self.states.iter().enumerate() {
            m.entry(s.last().clone()).or_default().push(i as StateId);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cs(burst: &[i64], held: u32, init: bool) -> ControlState<AggregateState> {
        ControlState {
            state: AggregateState {
                initial_form: init,
                held,
                burst: burst.iter().map(|&k| vec![k]).collect(),
            },
            spec: 0,
        }
    }

    fn two_input() -> FiniteSystem<ControlState<AggregateState>> {
        let mut s = FiniteSystem::new();
        let a = s.add_state(cs(&[0], 0, true), vec![vec![0.0]]);
        let b = s.add_state(cs(&[1], 0, false), vec![vec![1.0]]);
        let c = s.add_state(cs(&[1, 2], 1, false), vec![vec![1.0], vec![2.0]]);
        s.set_initial(a);
        s.add_transition(a, 0, b);
        s.add_transition(a, 1, c);
        s.add_transition(b, 0, b);
        s.add_transition(c, 1, b);
        s
    }

    #[test]
    fn constant_machine() {
        let mut s = FiniteSystem::new();
        let a = s.add_state(cs(&[0], 0, true), vec![vec![0.0]]);
        s.set_initial(a);
        s.add_transition(a, 0, a);
        let m = refine(&s, vec![1.0], vec![vec![0.0]], (1, 1), &SelectionPolicy::FirstCanonical)
            .unwrap();
        for _ in 0..3 {
            assert_eq!(m.step(0, &[0]).unwrap(), (0, &[0u32][..]));
        }
    }

    #[test]
    fn policies() {
        let s = two_input();
        let inputs = vec![vec![0.0], vec![1.0]];
        let first = refine(&s, vec![1.0], inputs.clone(), (1, 2), &SelectionPolicy::FirstCanonical)
            .unwrap();
        assert_eq!(first.selector[0], 0);
        let pri = refine(
            &s,
            vec![1.0],
            inputs.clone(),
            (1, 2),
            &SelectionPolicy::Priority(vec![1, 0]),
        )
        .unwrap();
        assert_eq!(pri.selector, vec![1, 0, 1]);
        let r1 = refine(&s, vec![1.0], inputs.clone(), (1, 2), &SelectionPolicy::Random(7)).unwrap();
        let r2 = refine(&s, vec![1.0], inputs, (1, 2), &SelectionPolicy::Random(7)).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.check_against(&s).unwrap(), 3);
    }

    #[test]
    fn domain_and_successor_rules() {
        let s = two_input();
        let m = refine(
            &s,
            vec![1.0],
            vec![vec![0.0], vec![1.0]],
            (1, 2),
            &SelectionPolicy::Priority(vec![1]),
        )
        .unwrap();
        assert!(matches!(m.step(0, &[1]), Err(RefineError::OutsideDomain { .. })));
        assert_eq!(m.initial_state(&[0]).unwrap(), 0);
        assert!(m.initial_state(&[5]).is_err());
        assert_eq!(m.next_state(0, 2, &[2]).unwrap(), 2);
        assert!(m.next_state(0, 1, &[2]).is_err());
    }

    #[test]
    fn blocking_rejected() {
        let mut s = FiniteSystem::new();
        s.add_state(cs(&[0], 0, true), vec![vec![0.0]]);
        assert_eq!(
            refine(&s, vec![1.0], vec![vec![0.0]], (1, 1), &SelectionPolicy::FirstCanonical),
            Err(RefineError::BlockingController(0))
        );
    }

    #[test]
    fn text_round_trip() {
        let m = refine(
            &two_input(),
            vec![0.025],
            vec![vec![-0.5], vec![0.5]],
            (1, 2),
            &SelectionPolicy::FirstCanonical,
        )
        .unwrap();
        let text = m.to_text();
        let back = MealyController::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        assert!(MealyController::from_text("ncs-controller v2").is_err());
    }
}
