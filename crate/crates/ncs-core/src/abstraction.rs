//! Aggregate-state semantics of the sampled networked plant and its symbolic
//! models.
//!
//! An aggregate state is a burst `(x_1, .., x_N)` of plant samples together
//! with the input held while the *next* burst is produced. The burst of a
//! successor is generated from the last sample of the current burst under
//! the current held input; the transition label becomes the new held input.
//! Initial-form states carry a single sample `x_0` and the reference input.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::DelayBounds;
use crate::plant::lattice::odometer;
use crate::plant::{Lattice, LatticeError, LatticePoint, PlantError, PlantModel, BOUNDARY_TOL};
use crate::tsys::{Burst, FiniteSystem, InputId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AbsError {
    #[error("parameter condition violated: {0}")]
    Condition(String),
    #[error("certificate check failed ({condition}): {detail}")]
    Certificate {
        condition: &'static str,
        detail: String,
    },
    #[error("LeftStateSpace: an iterate left the state set")]
    LeftStateSpace,
    #[error("CapacityExceeded: {count} items exceed the budget of {budget}")]
    CapacityExceeded { count: u128, budget: u128 },
    #[error("burst length {n} outside [{n_min}; {n_max}]")]
    BadBurstLength { n: u32, n_min: u32, n_max: u32 },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// A class-K-infinity function with an evaluable inverse.
#[derive(Clone)]
pub enum KFunction {
    /// `c * r^p`, inverted in closed form.
    Power { c: f64, p: f64 },
    /// Any strictly increasing function; inverted by bisection.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for KFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KFunction::Power { c, p } => write!(f, "{}*r^{}", c, p),
            KFunction::Custom(_) => f.write_str("custom"),
        }
    }
}

impl KFunction {
    pub fn linear(c: f64) -> Self {
        KFunction::Power { c, p: 1.0 }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            KFunction::Power { c, p } => c * libm::pow(r, *p),
            KFunction::Custom(f) => f(r),
        }
    }

    /// Smallest `r` in `[0, hi]` with `eval(r) >= s`, or `hi` if none.
    pub fn inverse(&self, s: f64, hi: f64) -> f64 {
        match self {
            KFunction::Power { c, p } => libm::pow(s / c, 1.0 / p),
            KFunction::Custom(f) => {
                if f(hi) <= s {
                    return hi;
                }
                let (mut lo, mut hi) = (0.0, hi);
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }
}

pub type LyapunovFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Incremental Lyapunov certificate `V` with rate `lambda`, bounds
/// `alpha_lower(|x - x'|) <= V <= alpha_upper(|x - x'|)` and mismatch gain
/// `gamma`. Norms are infinity norms.
#[derive(Clone)]
pub struct LyapunovCertificate {
    pub v: LyapunovFn,
    pub lambda: f64,
    pub alpha_lower: KFunction,
    pub alpha_upper: KFunction,
    pub gamma: KFunction,
    pub symmetric: bool,
}

impl fmt::Debug for LyapunovCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCertificate")
            .field("lambda", &self.lambda)
            .field("alpha_lower", &self.alpha_lower)
            .field("alpha_upper", &self.alpha_upper)
            .field("gamma", &self.gamma)
            .field("symmetric", &self.symmetric)
            .finish()
    }
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| libm::fabs(x - y))
        .fold(0.0, libm::fmax)
}

impl LyapunovCertificate {
    /// `V = |x - x'|_inf`, so all three bounds are the identity.
    pub fn inf_norm(lambda: f64) -> Self {
        LyapunovCertificate {
            v: Arc::new(inf_dist),
            lambda,
            alpha_lower: KFunction::linear(1.0),
            alpha_upper: KFunction::linear(1.0),
            gamma: KFunction::linear(1.0),
            symmetric: true,
        }
    }

    /// `V = 0.5 |x - x'|_2^2` in dimension `dim`, with `alpha_lower = 0.5 r^2`,
    /// `alpha_upper = 0.5 dim r^2` and a linear mismatch gain.
    pub fn half_squared(lambda: f64, dim: usize, gamma_gain: f64) -> Self {
        LyapunovCertificate {
            v: Arc::new(|a: &[f64], b: &[f64]| {
                0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            }),
            lambda,
            alpha_lower: KFunction::Power { c: 0.5, p: 2.0 },
            alpha_upper: KFunction::Power {
                c: 0.5 * dim as f64,
                p: 2.0,
            },
            gamma: KFunction::linear(gamma_gain),
            symmetric: true,
        }
    }

    pub fn value(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.v)(a, b)
    }
}

/// Worst slack observed per certificate condition (negative means violated).
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub samples: usize,
    pub bounds_slack: f64,
    pub gamma_slack: f64,
    pub decay_slack: f64,
}

fn sample_point(plant: &PlantModel, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rects = plant.state_box().rects();
    let r = &rects[rng.gen_range(0..rects.len())];
    (0..r.dim())
        .map(|i| r.lo[i] + rng.gen::<f64>() * r.side(i))
        .collect()
}

/// Spot-checks the certificate on `samples` random pairs, triples and
/// inputs drawn from the state set. The decay condition is checked in its
/// sampled form `V(f(x1), f(x2)) <= e^{lambda tau} V(x1, x2) + tol`.
pub fn validate_certificate(
    cert: &LyapunovCertificate,
    plant: &PlantModel,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CertificateReport, AbsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = libm::exp(cert.lambda * plant.tau());
    let mut rep = CertificateReport {
        samples,
        bounds_slack: f64::INFINITY,
        gamma_slack: f64::INFINITY,
        decay_slack: f64::INFINITY,
    };
    let fail = |condition, a: &[f64], b: &[f64]| AbsError::Certificate {
        condition,
        detail: format!("at {:?}, {:?}", a, b),
    };
    for _ in 0..samples {
        let a = sample_point(plant, &mut rng);
        let b = sample_point(plant, &mut rng);
        let c = sample_point(plant, &mut rng);
        let v = cert.value(&a, &b);
        let r = inf_dist(&a, &b);
        let s = libm::fmin(
            v - cert.alpha_lower.eval(r),
            cert.alpha_upper.eval(r) - v,
        );
        rep.bounds_slack = libm::fmin(rep.bounds_slack, s);
        if s < -tol {
            return Err(fail("alpha_lower <= V <= alpha_upper", &a, &b));
        }
        let g = cert.gamma.eval(inf_dist(&b, &c)) - (v - cert.value(&a, &c));
        rep.gamma_slack = libm::fmin(rep.gamma_slack, g);
        if g < -tol {
            return Err(fail("V(x,x') - V(x,x'') <= gamma(|x'-x''|)", &b, &c));
        }
        if cert.symmetric && libm::fabs(v - cert.value(&b, &a)) > tol {
            return Err(fail("V symmetric", &a, &b));
        }
        let u = rng.gen_range(0..plant.inputs().len());
        let fa = plant.step(&a, u)?;
        let fb = plant.step(&b, u)?;
        let d = rate * v + tol - cert.value(&fa, &fb);
        rep.decay_slack = libm::fmin(rep.decay_slack, d);
        if d < 0.0 {
            return Err(fail("V(f(x1),f(x2)) <= e^(lambda tau) V(x1,x2)", &a, &b));
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Forward-complete certificate; nondeterministic symbolic model.
    Fc,
    /// Contracting certificate; quantized-chain symbolic model.
    Gas,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractionConfig {
    /// Per-axis state quantization; its maximum is the scalar `mu_x`.
    pub mu_x: Vec<f64>,
    pub delay_bounds: DelayBounds,
    pub variant: Variant,
    pub epsilon: f64,
    pub theta: f64,
}

impl AbstractionConfig {
    pub fn mu_max(&self) -> f64 {
        self.mu_x.iter().copied().fold(0.0, libm::fmax)
    }
}

/// Smallest precision the contracting model guarantees at step `mu`:
/// `mu + alpha_lower^-1((2 + e^{lambda tau}) / (1 - e^{lambda tau}) gamma(mu))`.
pub fn gas_min_epsilon(cert: &LyapunovCertificate, tau: f64, mu: f64, diam: f64) -> f64 {
    let e = libm::exp(cert.lambda * tau);
    mu + cert
        .alpha_lower
        .inverse((2.0 + e) / (1.0 - e) * cert.gamma.eval(mu), f64::max(diam, 1.0) * 1e6)
}

/// Symbolic aggregate state: lattice-coordinate burst plus held input.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AggregateState {
    pub initial_form: bool,
    pub held: InputId,
    pub burst: Vec<LatticePoint>,
}

impl AggregateState {
    pub fn len(&self) -> usize {
        self.burst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.burst.is_empty()
    }

    pub fn last(&self) -> &LatticePoint {
        self.burst.last().expect("bursts are nonempty")
    }
}

/// Concrete aggregate state with real-valued burst entries.
#[derive(Debug, Clone)]
pub struct ConcreteState {
    pub initial_form: bool,
    pub held: InputId,
    pub burst: Burst,
}

impl Ord for ConcreteState {
    fn cmp(&self, other: &Self) -> Ordering {
        self.initial_form
            .cmp(&other.initial_form)
            .then(self.held.cmp(&other.held))
            .then(self.burst.len().cmp(&other.burst.len()))
            .then_with(|| {
                for (p, q) in self.burst.iter().zip(&other.burst) {
                    for (a, b) in p.iter().zip(q) {
                        match a.total_cmp(b) {
                            Ordering::Equal => {}
                            o => return o,
                        }
                    }
                }
                Ordering::Equal
            })
    }
}

impl PartialOrd for ConcreteState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for ConcreteState {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ConcreteState {}

/// Plant, lattice, certificate and configuration bound together, with the
/// derived link bound `(e^{lambda tau} + 2) gamma(mu_x)` and search radius.
#[derive(Debug, Clone)]
pub struct Abstraction {
    plant: PlantModel,
    lattice: Lattice,
    cert: LyapunovCertificate,
    cfg: AbstractionConfig,
    rate: f64,
    bound: f64,
    radius: f64,
    burst_limit: usize,
}

impl Abstraction {
    /// Checks the parameter conditions of the chosen variant.
    pub fn new(
        plant: PlantModel,
        cert: LyapunovCertificate,
        cfg: AbstractionConfig,
    ) -> Result<Self, AbsError> {
        let lattice = Lattice::new(cfg.mu_x.clone(), plant.state_box().clone())?;
        let mu = cfg.mu_max();
        let mu_hat = plant.state_box().mu_hat();
        let rate = libm::exp(cert.lambda * plant.tau());
        let hull = plant.state_box().hull();
        let diam = (0..hull.dim()).map(|i| hull.side(i)).fold(0.0, libm::fmax);
        match cfg.variant {
            Variant::Fc => {
                if mu > libm::fmin(mu_hat, cfg.epsilon) * (1.0 + 1e-12) {
                    return Err(AbsError::Condition(format!(
                        "condition mu_x <= min(mu_hat, epsilon): mu_x = {}, mu_hat = {}, epsilon = {}",
                        mu, mu_hat, cfg.epsilon
                    )));
                }
            }
            Variant::Gas => {
                if !(cert.lambda < 0.0) {
                    return Err(AbsError::Condition(format!(
                        "contracting model needs lambda < 0, got {}",
                        cert.lambda
                    )));
                }
                let need = gas_min_epsilon(&cert, plant.tau(), mu, diam);
                if cfg.epsilon < need * (1.0 - 1e-12) {
                    return Err(AbsError::Condition(format!(
                        "condition epsilon >= mu_x + alpha_lower^-1((2+e^(lambda tau))/(1-e^(lambda tau)) gamma(mu_x)): epsilon = {}, required {}",
                        cfg.epsilon, need
                    )));
                }
            }
        }
        let bound = (rate + 2.0) * cert.gamma.eval(mu);
        let radius = cert.alpha_lower.inverse(bound, diam);
        Ok(Abstraction {
            plant,
            lattice,
            cert,
            cfg,
            rate,
            bound,
            radius,
            burst_limit: 1_000_000,
        })
    }

    /// Maximum number of successor bursts a single `(state, input)` pair may
    /// produce before [`AbsError::CapacityExceeded`].
    pub fn with_burst_limit(mut self, limit: usize) -> Self {
        self.burst_limit = limit;
        self
    }

    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn certificate(&self) -> &LyapunovCertificate {
        &self.cert
    }

    pub fn config(&self) -> &AbstractionConfig {
        &self.cfg
    }

    pub fn n_inputs(&self) -> usize {
        self.plant.inputs().len()
    }

    /// `e^{lambda tau}`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Right-hand side of the link predicate.
    pub fn link_bound(&self) -> f64 {
        self.bound
    }

    /// Infinity-norm candidate radius around each quantized image.
    pub fn search_radius(&self) -> f64 {
        self.radius
    }

    fn check_len(&self, n: u32) -> Result<(), AbsError> {
        let b = &self.cfg.delay_bounds;
        if n < b.n_min || n > b.n_max {
            return Err(AbsError::BadBurstLength {
                n,
                n_min: b.n_min,
                n_max: b.n_max,
            });
        }
        Ok(())
    }

    /// Real coordinates of a symbolic burst.
    pub fn output(&self, x: &AggregateState) -> Burst {
        x.burst.iter().map(|k| self.lattice.to_real(k)).collect()
    }

    /// Symbolic initial-form state of a measured initial condition.
    pub fn initial_state_of(&self, x0: &[f64]) -> Result<AggregateState, AbsError> {
        Ok(AggregateState {
            initial_form: true,
            held: self.plant.u_ref() as InputId,
            burst: vec![self.lattice.quantize(x0)?],
        })
    }

    /// All lattice points of the initial set as initial-form states, in
    /// lexicographic order.
    pub fn initial_states(&self, budget: usize) -> Result<Vec<AggregateState>, AbsError> {
        let mut pts = alloc::collections::BTreeSet::new();
        for r in self.plant.init_box().rects() {
            let lo: Vec<i64> = (0..r.dim())
                .map(|i| libm::ceil(r.lo[i] / self.cfg.mu_x[i] - BOUNDARY_TOL) as i64)
                .collect();
            let hi: Vec<i64> = (0..r.dim())
                .map(|i| libm::floor(r.hi[i] / self.cfg.mu_x[i] + BOUNDARY_TOL) as i64)
                .collect();
            if lo.iter().zip(&hi).any(|(a, b)| a > b) {
                continue;
            }
            let mut k = lo.clone();
            loop {
                if self.lattice.contains_point(&k) {
                    pts.insert(k.clone());
                    if pts.len() > budget {
                        return Err(AbsError::CapacityExceeded {
                            count: pts.len() as u128,
                            budget: budget as u128,
                        });
                    }
                }
                if !odometer(&mut k, &lo, &hi) {
                    break;
                }
            }
        }
        let held = self.plant.u_ref() as InputId;
        Ok(pts
            .into_iter()
            .map(|k| AggregateState {
                initial_form: true,
                held,
                burst: vec![k],
            })
            .collect())
    }

    fn image(&self, x: &[f64], held: InputId) -> Result<Option<Vec<f64>>, AbsError> {
        let y = self.plant.step(x, held as usize)?;
        Ok(if self.plant.state_box().contains(&y) {
            Some(y)
        } else {
            None
        })
    }

    /// Concrete successor with burst length `n2` and new held input `u`.
    pub fn concrete_successor(
        &self,
        x: &ConcreteState,
        u: InputId,
        n2: u32,
    ) -> Result<ConcreteState, AbsError> {
        self.check_len(n2)?;
        let mut cur = x.burst.last().expect("bursts are nonempty").clone();
        let mut burst = Vec::with_capacity(n2 as usize);
        for _ in 0..n2 {
            cur = self
                .image(&cur, x.held)?
                .ok_or(AbsError::LeftStateSpace)?;
            burst.push(cur.clone());
        }
        Ok(ConcreteState {
            initial_form: false,
            held: u,
            burst,
        })
    }

    /// Initial-form concrete state `(x0, u_ref)`.
    pub fn concrete_initial(&self, x0: &[f64]) -> ConcreteState {
        ConcreteState {
            initial_form: true,
            held: self.plant.u_ref() as InputId,
            burst: vec![x0.to_vec()],
        }
    }

    /// Quantizes every entry of a real burst.
    pub fn quantize_burst(&self, burst: &[Vec<f64>]) -> Result<Vec<LatticePoint>, AbsError> {
        burst
            .iter()
            .map(|x| self.lattice.quantize(x).map_err(AbsError::from))
            .collect()
    }

    /// Quantized image of a lattice point on the unbounded lattice. The image
    /// may leave X while a concrete trajectory quantized to `from` stays
    /// inside, so dropping such links would lose concrete behaviour at the
    /// boundary; the successors themselves are still lattice points of X.
    fn fc_anchor(&self, from: &[i64], held: InputId) -> Result<LatticePoint, AbsError> {
        let y = self.plant.step(&self.lattice.to_real(from), held as usize)?;
        Ok(self.lattice.round(&y))
    }

    fn link_candidates(
        &self,
        from: &[i64],
        held: InputId,
    ) -> Result<Vec<LatticePoint>, AbsError> {
        let q = self.fc_anchor(from, held)?;
        let qr = self.lattice.to_real(&q);
        Ok(self
            .lattice
            .ball(&q, self.radius)
            .into_iter()
            .filter(|c| self.cert.value(&qr, &self.lattice.to_real(c)) <= self.bound + 1e-12)
            .collect())
    }

    /// Successors of the forward-complete model: for each burst length, all
    /// lattice bursts whose every link lies within the link bound of the
    /// quantized image of its predecessor. Generated by ascending length,
    /// lexicographically within a length.
    pub fn fc_successors(
        &self,
        x: &AggregateState,
        u: InputId,
    ) -> Result<Vec<AggregateState>, AbsError> {
        let mut memo: BTreeMap<LatticePoint, Vec<LatticePoint>> = BTreeMap::new();
        let mut cands = |p: &LatticePoint| -> Result<Vec<LatticePoint>, AbsError> {
            if let Some(c) = memo.get(p) {
                return Ok(c.clone());
            }
            let c = self.link_candidates(p, x.held)?;
            memo.insert(p.clone(), c.clone());
            Ok(c)
        };
        let mut out = Vec::new();
        for n in self.cfg.delay_bounds.range() {
            let n = n as usize;
            // Depth-first walk over choice stacks gives lexicographic order.
            let mut stack: Vec<(Vec<LatticePoint>, usize)> = Vec::with_capacity(n);
            stack.push((cands(x.last())?, 0));
            let mut burst: Vec<LatticePoint> = Vec::with_capacity(n);
            while let Some((list, idx)) = stack.last_mut() {
                if *idx >= list.len() {
                    stack.pop();
                    burst.pop();
                    continue;
                }
                let pick = list[*idx].clone();
                *idx += 1;
                burst.push(pick.clone());
                if burst.len() == n {
                    out.push(AggregateState {
                        initial_form: false,
                        held: u,
                        burst: burst.clone(),
                    });
                    if out.len() > self.burst_limit {
                        return Err(AbsError::CapacityExceeded {
                            count: out.len() as u128,
                            budget: self.burst_limit as u128,
                        });
                    }
                    burst.pop();
                } else {
                    let next = cands(&pick)?;
                    stack.push((next, 0));
                }
            }
        }
        Ok(out)
    }

    /// Direct membership test for a transition of the forward-complete model.
    pub fn fc_has_transition(
        &self,
        x: &AggregateState,
        u: InputId,
        y: &AggregateState,
    ) -> Result<bool, AbsError> {
        let n = y.burst.len() as u32;
        if y.initial_form || y.held != u || self.check_len(n).is_err() {
            return Ok(false);
        }
        let mut prev = x.last();
        for k in &y.burst {
            if !self.lattice.contains_point(k) {
                return Ok(false);
            }
            let q = self.lattice.to_real(&self.fc_anchor(prev, x.held)?);
            if self.cert.value(&q, &self.lattice.to_real(k)) > self.bound + 1e-12 {
                return Ok(false);
            }
            prev = k;
        }
        Ok(true)
    }

    /// Successors of the contracting model: one quantized iterate chain per
    /// burst length, dropped once an iterate leaves the state set.
    pub fn gas_successors(
        &self,
        x: &AggregateState,
        u: InputId,
    ) -> Result<Vec<AggregateState>, AbsError> {
        let mut out = Vec::new();
        let mut chain: Vec<LatticePoint> = Vec::new();
        let mut cur = x.last().clone();
        for n in 1..=self.cfg.delay_bounds.n_max {
            let Some(img) = self.image(&self.lattice.to_real(&cur), x.held)? else {
                break;
            };
            cur = self.lattice.quantize(&img)?;
            chain.push(cur.clone());
            if n >= self.cfg.delay_bounds.n_min {
                out.push(AggregateState {
                    initial_form: false,
                    held: u,
                    burst: chain.clone(),
                });
            }
        }
        Ok(out)
    }

    /// Successors under the configured variant.
    pub fn successors(
        &self,
        x: &AggregateState,
        u: InputId,
    ) -> Result<Vec<AggregateState>, AbsError> {
        match self.cfg.variant {
            Variant::Fc => self.fc_successors(x, u),
            Variant::Gas => self.gas_successors(x, u),
        }
    }

    /// All `(input, successor)` pairs, inputs ascending.
    pub fn expand(&self, x: &AggregateState) -> Result<Vec<(InputId, AggregateState)>, AbsError> {
        let mut out = Vec::new();
        for u in 0..self.n_inputs() as InputId {
            out.extend(self.successors(x, u)?.into_iter().map(|y| (u, y)));
        }
        Ok(out)
    }

    /// Sequential breadth-first closure of `seeds` under [`Self::expand`].
    pub fn build_reachable(
        &self,
        seeds: Vec<AggregateState>,
        budget: usize,
        require_complete: bool,
    ) -> Result<Reachable<AggregateState>, AbsError> {
        build_reachable(
            seeds,
            |x| self.output(x),
            |wave| wave.iter().map(|x| self.expand(x)).collect(),
            budget,
            require_complete,
        )
    }

    /// Breadth-first closure of concrete states, `depth` waves deep.
    pub fn build_concrete(
        &self,
        seeds: Vec<ConcreteState>,
        depth: usize,
        budget: usize,
    ) -> Result<FiniteSystem<ConcreteState>, AbsError> {
        let mut sys = FiniteSystem::new();
        let mut wave = Vec::new();
        for s in seeds {
            let out = s.burst.clone();
            let id = sys.add_state(s, out);
            sys.set_initial(id);
            wave.push(id);
        }
        for _ in 0..depth {
            let mut next = Vec::new();
            for &id in &wave {
                let x = sys.key(id).clone();
                for u in 0..self.n_inputs() as InputId {
                    for n in self.cfg.delay_bounds.range() {
                        let y = match self.concrete_successor(&x, u, n) {
                            Ok(y) => y,
                            Err(AbsError::LeftStateSpace) => continue,
                            Err(e) => return Err(e),
                        };
                        let before = sys.n_states();
                        let out = y.burst.clone();
                        let yid = sys.add_state(y, out);
                        if sys.n_states() > before {
                            if sys.n_states() > budget {
                                return Err(AbsError::CapacityExceeded {
                                    count: sys.n_states() as u128,
                                    budget: budget as u128,
                                });
                            }
                            next.push(yid);
                        }
                        sys.add_transition(id, u, yid);
                    }
                }
            }
            wave = next;
        }
        Ok(sys)
    }
}

/// Result of a breadth-first closure.
#[derive(Debug, Clone)]
pub struct Reachable<K> {
    pub system: FiniteSystem<K>,
    /// Set when the budget stopped the exploration; unexplored states then
    /// have no outgoing transitions.
    pub truncated: bool,
}

/// Breadth-first closure of `seeds` (marked initial). Each wave is handed to
/// `expand_wave` as a slice in id order, so callers may evaluate it in
/// parallel; discovered states are merged in wave order, which makes the
/// result independent of how the wave was evaluated.
pub fn build_reachable<K, E>(
    mut seeds: Vec<K>,
    output: impl Fn(&K) -> Burst,
    mut expand_wave: impl FnMut(&[K]) -> Result<Vec<Vec<(InputId, K)>>, E>,
    budget: usize,
    require_complete: bool,
) -> Result<Reachable<K>, E>
where
    K: Ord + Clone,
    E: From<AbsError>,
{
    seeds.sort();
    seeds.dedup();
    let mut sys = FiniteSystem::new();
    let mut truncated = false;
    for s in seeds {
        let out = output(&s);
        let id = sys.add_state(s, out);
        sys.set_initial(id);
    }
    let mut lo = 0usize;
    while lo < sys.n_states() && !truncated {
        let hi = sys.n_states();
        let wave: Vec<K> = (lo..hi).map(|i| sys.key(i as u32).clone()).collect();
        let succ = expand_wave(&wave)?;
        'wave: for (i, list) in succ.into_iter().enumerate() {
            let src = (lo + i) as u32;
            for (u, y) in list {
                let id = match sys.id_of(&y) {
                    Some(id) => id,
                    None => {
                        if sys.n_states() >= budget {
                            if require_complete {
                                return Err(AbsError::CapacityExceeded {
                                    count: sys.n_states() as u128 + 1,
                                    budget: budget as u128,
                                }
                                .into());
                            }
                            truncated = true;
                            break 'wave;
                        }
                        let out = output(&y);
                        sys.add_state(y, out)
                    }
                };
                sys.add_transition(src, u, id);
            }
        }
        lo = hi;
    }
    Ok(Reachable {
        system: sys,
        truncated,
    })
}
