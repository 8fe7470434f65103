//! Discrete-time simulation of the networked loop and trace verification.
//!
//! Iteration `k` starts at sampling index `M_k` (with `M_1 = 0`): the
//! controller receives `w_k = y_{M_k}`, answers `v_k`, and the plant keeps
//! holding `v_{k-1}` (with `v_0` the reference input) until
//! `M_{k+1} = M_k + N_k`, when `v_k` takes over.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::network::{DelayBounds, DelaySampler, NetworkError};
use crate::plant::{Lattice, LatticeError, LatticePoint, PlantError, PlantModel};
use crate::refine::{MealyController, RefineError};
use crate::synthesis::Specification;
use crate::tsys::{Burst, InputId, StateId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("horizon must be at least one sampling interval")]
    EmptyHorizon,
    #[error("LeftStateSpace: the plant left the state set at sample {s}")]
    LeftStateSpace { s: usize },
    #[error(transparent)]
    Controller(#[from] RefineError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Everything observed in one closed-loop run. Sample-indexed vectors have
/// `horizon + 1` entries; iteration-indexed ones have one entry per started
/// iteration (`M_k < horizon`).
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    /// Sensor samples `y~_s = x(s tau)`.
    pub y_tilde: Vec<Vec<f64>>,
    /// Quantized samples `y_s`.
    pub y: Vec<LatticePoint>,
    /// Input id held on `[s, s + 1)`, for `s < horizon`.
    pub held: Vec<InputId>,
    /// `w_k`.
    pub w: Vec<LatticePoint>,
    /// `v_0, v_1, ..`: one more entry than there are iterations.
    pub v: Vec<InputId>,
    /// `N_k`.
    pub n_seq: Vec<u32>,
    /// `M_k`.
    pub m_seq: Vec<usize>,
    /// `xi_k`.
    pub xi_seq: Vec<StateId>,
}

impl LoopTrace {
    pub fn iterations(&self) -> usize {
        self.n_seq.len()
    }

    pub fn horizon(&self) -> usize {
        self.held.len()
    }

    /// Bursts `(y~_{M_k + 1}, .., y~_{M_{k+1}})` of the iterations that
    /// completed inside the horizon.
    pub fn bursts(&self) -> Vec<Burst> {
        self.m_seq
            .iter()
            .zip(&self.n_seq)
            .filter(|(&m, &n)| m + n as usize <= self.horizon())
            .map(|(&m, &n)| self.y_tilde[m + 1..=m + n as usize].to_vec())
            .collect()
    }

    /// Checks the structural laws of the loop. Returns a description of the
    /// first violation.
    pub fn check_invariants(&self, lattice: &Lattice, u_ref: InputId) -> Result<(), &'static str> {
        if self.m_seq.first() != Some(&0) {
            return Err("M_1 = 0");
        }
        for k in 1..self.m_seq.len() {
            if self.m_seq[k] != self.m_seq[k - 1] + self.n_seq[k - 1] as usize {
                return Err("M_{k+1} = M_k + N_k");
            }
        }
        if self.m_seq.iter().any(|&m| m >= self.horizon()) {
            return Err("iterations start inside the horizon");
        }
        for (k, &m) in self.m_seq.iter().enumerate() {
            if self.w[k] != self.y[m] {
                return Err("w_k = y_{M_k}");
            }
        }
        if self.v.first() != Some(&u_ref) || self.v.len() != self.iterations() + 1 {
            return Err("v_0 is the reference input");
        }
        for (k, &m) in self.m_seq.iter().enumerate() {
            let end = (m + self.n_seq[k] as usize).min(self.horizon());
            if self.held[m..end].iter().any(|&u| u != self.v[k]) {
                return Err("v_{k-1} is held on [M_k, M_{k+1})");
            }
        }
        for (yt, y) in self.y_tilde.iter().zip(&self.y) {
            if lattice.quantize(yt).ok().as_ref() != Some(y) {
                return Err("y_s = [y~_s]");
            }
        }
        Ok(())
    }
}

/// Runs the loop from `x0` for `horizon` sampling intervals.
pub fn run_loop(
    plant: &PlantModel,
    ctrl: &MealyController,
    x0: &[f64],
    bounds: &DelayBounds,
    sampler: &mut DelaySampler,
    horizon: usize,
) -> Result<LoopTrace, SimError> {
    if horizon == 0 {
        return Err(SimError::EmptyHorizon);
    }
    let lattice = Lattice::new(ctrl.mu_x.clone(), plant.state_box().clone())?;
    if !plant.state_box().contains(x0) {
        return Err(SimError::LeftStateSpace { s: 0 });
    }
    let mut t = LoopTrace {
        y_tilde: vec![x0.to_vec()],
        y: vec![lattice.quantize(x0)?],
        held: Vec::with_capacity(horizon),
        w: Vec::new(),
        v: vec![plant.u_ref() as InputId],
        n_seq: Vec::new(),
        m_seq: Vec::new(),
        xi_seq: Vec::new(),
    };
    let mut xi = ctrl.initial_state(&t.y[0])?;
    let mut m = 0usize;
    while m < horizon {
        let w = t.y[m].clone();
        let (v, _) = ctrl.step(xi, &w)?;
        let n = sampler.sample(bounds)?;
        t.m_seq.push(m);
        t.w.push(w);
        t.xi_seq.push(xi);
        t.n_seq.push(n);
        let hold = *t.v.last().unwrap();
        t.v.push(v);
        let end = (m + n as usize).min(horizon);
        for s in m..end {
            let next = plant.step(&t.y_tilde[s], hold as usize)?;
            if !plant.state_box().contains(&next) {
                return Err(SimError::LeftStateSpace { s: s + 1 });
            }
            t.y.push(lattice.quantize(&next)?);
            t.y_tilde.push(next);
            t.held.push(hold);
        }
        let m_next = m + n as usize;
        if m_next <= horizon {
            xi = ctrl.next_state(xi, n, &t.y[m_next])?;
        }
        m = m_next;
    }
    Ok(t)
}

/// Outcome of checking a sample sequence against a specification.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub ok: bool,
    /// First sample index at which no specification run stays close.
    pub first_failure: Option<usize>,
    /// A matching specification run (empty when `ok` is false).
    pub witness: Vec<u32>,
}

/// Decides whether some run `x_Q^0 x_Q^1 ..` of `q` starting in an initial
/// state stays within `eps` (infinity norm) of `samples`, by forward set
/// propagation with back-pointers.
pub fn verify_trace(samples: &[Vec<f64>], q: &Specification, eps: f64) -> Verdict {
    let close = |x: &[f64], i: u32| {
        x.iter()
            .zip(&q.states[i as usize])
            .all(|(a, b)| libm::fabs(a - b) <= eps + 1e-12)
    };
    let mut back: Vec<Vec<(u32, u32)>> = Vec::with_capacity(samples.len());
    let mut cur: BTreeSet<u32> = BTreeSet::new();
    for (s, x) in samples.iter().enumerate() {
        let mut next = BTreeSet::new();
        let mut ptr = Vec::new();
        if s == 0 {
            for &i in &q.initial {
                if close(x, i) {
                    next.insert(i);
                    ptr.push((i, i));
                }
            }
        } else {
            for &i in &cur {
                for j in q.successors(i) {
                    if !next.contains(&j) && close(x, j) {
                        next.insert(j);
                        ptr.push((j, i));
                    }
                }
            }
        }
        if next.is_empty() {
            return Verdict {
                ok: false,
                first_failure: Some(s),
                witness: Vec::new(),
            };
        }
        ptr.sort_unstable();
        back.push(ptr);
        cur = next;
    }
    let mut witness = vec![0u32; samples.len()];
    let mut at = match cur.iter().next() {
        Some(&a) => a,
        None => {
            return Verdict {
                ok: true,
                first_failure: None,
                witness: Vec::new(),
            }
        }
    };
    for s in (0..samples.len()).rev() {
        witness[s] = at;
        let i = back[s].binary_search_by_key(&at, |&(j, _)| j).unwrap();
        at = back[s][i].1;
    }
    Verdict {
        ok: true,
        first_failure: None,
        witness,
    }
}

/// Re-integrates a trace at `per_interval` points per sampling interval for
/// plotting: `(t, x)` pairs with `t` in units of seconds.
pub fn dense_output(
    plant: &PlantModel,
    trace: &LoopTrace,
    per_interval: usize,
) -> Result<Vec<(f64, Vec<f64>)>, SimError> {
    let per = per_interval.max(1);
    let dt = plant.tau() / per as f64;
    let mut out = Vec::with_capacity(trace.horizon() * per + 1);
    for (s, &u) in trace.held.iter().enumerate() {
        let x = &trace.y_tilde[s];
        for j in 0..per {
            let y = plant.flow(x, plant.input(u as usize), dt * j as f64)?;
            out.push((plant.tau() * s as f64 + dt * j as f64, y));
        }
    }
    out.push((
        plant.tau() * trace.horizon() as f64,
        trace.y_tilde.last().unwrap().clone(),
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::AggregateState;
    use crate::network::DelayPolicy;
    use crate::plant::models::LinearField;
    use crate::plant::{BoxUnion, Rect};
    use crate::refine::{refine, SelectionPolicy};
    use crate::synthesis::ControlState;
    use crate::tsys::FiniteSystem;
    use alloc::format;
    use alloc::sync::Arc;

    fn spec(points: &[f64], edges: &[(u32, u32)], init: &[u32]) -> Specification {
        Specification::new(
            (0..points.len()).map(|i| format!("q{}", i)).collect(),
            points.iter().map(|&p| vec![p]).collect(),
            edges.iter().copied().collect(),
            init.iter().copied().collect(),
        )
        .unwrap()
    }

    /// A one-state controller at lattice point 0 that always answers 0.
    fn hold_zero(mu: f64) -> MealyController {
        let mut s = FiniteSystem::new();
        let k = |init: bool, n: usize| ControlState {
            state: AggregateState {
                initial_form: init,
                held: 0,
                burst: vec![vec![0]; n],
            },
            spec: 0,
        };
        let a = s.add_state(k(true, 1), vec![vec![0.0]]);
        let b = s.add_state(k(false, 1), vec![vec![0.0]]);
        s.set_initial(a);
        s.add_transition(a, 0, b);
        s.add_transition(b, 0, b);
        refine(&s, vec![mu], vec![vec![0.0]], (1, 1), &SelectionPolicy::FirstCanonical).unwrap()
    }

    #[test]
    fn constant_plant_stays_put() {
        let b = BoxUnion::single(Rect::symmetric(&[1.0]));
        let p = PlantModel::new(
            Arc::new(LinearField::new(vec![vec![0.0]], vec![vec![0.0]])),
            b.clone(),
            b,
            vec![vec![0.0]],
            1.0,
            0,
        )
        .unwrap();
        let c = hold_zero(0.5);
        let bounds = DelayBounds::discrete(1, 1);
        let mut smp = DelaySampler::new(DelayPolicy::Fixed(1));
        let t = run_loop(&p, &c, &[0.1], &bounds, &mut smp, 10).unwrap();
        assert!(t.y_tilde.iter().all(|y| y == &vec![0.1]));
        assert_eq!(t.iterations(), 10);
        t.check_invariants(&Lattice::uniform(0.5, p.state_box().clone()).unwrap(), 0)
            .unwrap();
    }

    #[test]
    fn halving_closed_form() {
        let b = BoxUnion::single(Rect::symmetric(&[1.0]));
        let p = PlantModel::new(
            Arc::new(LinearField::new(vec![vec![-1.0]], vec![vec![1.0]])),
            b.clone(),
            b,
            vec![vec![0.0]],
            core::f64::consts::LN_2,
            0,
        )
        .unwrap();
        // Coarse lattice so every sample quantizes to 0.
        let c = hold_zero(1.0);
        let bounds = DelayBounds::discrete(1, 1);
        let mut smp = DelaySampler::new(DelayPolicy::Fixed(1));
        let t = run_loop(&p, &c, &[0.4], &bounds, &mut smp, 8).unwrap();
        for (s, y) in t.y_tilde.iter().enumerate() {
            assert!((y[0] - 0.4 * libm::pow(2.0, -(s as f64))).abs() < 1e-8);
        }
    }

    #[test]
    fn outside_domain_is_reported() {
        let b = BoxUnion::single(Rect::symmetric(&[1.0]));
        let p = PlantModel::new(
            Arc::new(LinearField::new(vec![vec![0.0]], vec![vec![1.0]])),
            b.clone(),
            b,
            vec![vec![0.3]],
            1.0,
            0,
        )
        .unwrap();
        let c = hold_zero(0.5);
        let bounds = DelayBounds::discrete(1, 1);
        let mut smp = DelaySampler::new(DelayPolicy::Fixed(1));
        let e = run_loop(&p, &c, &[0.0], &bounds, &mut smp, 5).unwrap_err();
        assert!(matches!(e, SimError::Controller(_)));
    }

    #[test]
    fn verify_examples() {
        let q = spec(&[0.0], &[(0, 0)], &[0]);
        let v = verify_trace(&vec![vec![0.0]; 5], &q, 0.0);
        assert!(v.ok && v.witness == vec![0; 5]);

        let cyc = spec(&[0.0, 1.0, 2.0], &[(0, 1), (1, 2), (2, 0)], &[0]);
        let samples: Vec<Vec<f64>> = (0..7)
            .map(|s| vec![(s % 3) as f64 + if s % 2 == 0 { 0.04 } else { -0.03 }])
            .collect();
        let v = verify_trace(&samples, &cyc, 0.05);
        assert!(v.ok);
        assert_eq!(v.witness, vec![0, 1, 2, 0, 1, 2, 0]);

        let mut bad = samples.clone();
        bad[4][0] += 0.2;
        let v = verify_trace(&bad, &cyc, 0.05);
        assert_eq!((v.ok, v.first_failure), (false, Some(4)));
    }
}
