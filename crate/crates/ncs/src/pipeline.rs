//! The end-to-end run: configuration, abstraction, synthesis, refinement
//! and closed-loop simulation, with failures mapped to exit codes.

use std::fmt;
use std::path::Path;

use ncs_core::abstraction::{validate_certificate, AbsError, Abstraction, AggregateState, CertificateReport};
use ncs_core::network::DelaySampler;
use ncs_core::refine::{refine, MealyController, RefineError};
use ncs_core::sim::{run_loop, verify_trace, LoopTrace, SimError, Verdict};
use ncs_core::synthesis::{
    check_parameters, lift_spec, synthesize, verify_witnesses, LiftedSpec, ParamReport,
    Specification, SynthError, Synthesis, SynthesisOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{load_config, parse_config, ConfigError, RunConfig, Setup};
use crate::specfile::{load_spec, parse_spec_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// A failure with the exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct AppError {
    pub code: i32,
    pub msg: String,
}

impl AppError {
    pub fn new(code: i32, msg: impl Into<String>) -> Self {
        AppError {
            code,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for AppError {}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::new(EXIT_INVALID, format!("configuration error: {}", e))
    }
}

impl From<AbsError> for AppError {
    fn from(e: AbsError) -> Self {
        let code = match e {
            AbsError::Condition(_) | AbsError::Certificate { .. } | AbsError::Lattice(_) => {
                EXIT_INVALID
            }
            AbsError::CapacityExceeded { .. } => EXIT_EMPTY,
            _ => EXIT_RUNTIME,
        };
        AppError::new(code, e.to_string())
    }
}

impl From<SynthError> for AppError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Abstraction(a) => a.into(),
            SynthError::InvalidSpec(_) | SynthError::ParameterViolation(_) => {
                AppError::new(EXIT_INVALID, e.to_string())
            }
            SynthError::EmptyController { .. } | SynthError::CapacityExceeded { .. } => {
                AppError::new(EXIT_EMPTY, e.to_string())
            }
            SynthError::Witness(_) => AppError::new(EXIT_RUNTIME, e.to_string()),
        }
    }
}

impl From<RefineError> for AppError {
    fn from(e: RefineError) -> Self {
        AppError::new(EXIT_RUNTIME, e.to_string())
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        AppError::new(EXIT_RUNTIME, e.to_string())
    }
}

/// A parsed configuration with its derived quantities and specification.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: RunConfig,
    pub setup: Setup,
    pub spec: Option<Specification>,
}

impl Pipeline {
    /// Loads a config file and the spec file it references.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let cfg = load_config(path)?;
        let setup = cfg.setup()?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let spec = match cfg.spec_path(dir) {
            Some(p) => Some(load_spec(&p, &setup.plant.state_map)?),
            None => None,
        };
        Ok(Pipeline { cfg, setup, spec })
    }

    /// Builds from in-memory texts (bundled scenarios).
    pub fn from_texts(config: &str, spec: Option<&str>) -> Result<Self, AppError> {
        let cfg = parse_config(config)?;
        let setup = cfg.setup()?;
        let spec = match spec {
            Some(t) => Some(parse_spec_file(t)?.build(&setup.plant.state_map)?),
            None => None,
        };
        Ok(Pipeline { cfg, setup, spec })
    }

    pub fn spec(&self) -> Result<&Specification, AppError> {
        self.spec
            .as_ref()
            .ok_or_else(|| AppError::new(EXIT_INVALID, "configuration error: spec: no specification given"))
    }

    /// Composition conditions of the configured parameters.
    pub fn param_report(&self) -> ParamReport {
        let c = &self.setup.abs_cfg;
        check_parameters(
            c.mu_max(),
            c.theta,
            c.epsilon,
            self.setup.plant.plant.state_box().mu_hat(),
            c.variant,
            Some((&self.setup.cert, self.setup.plant.plant.tau())),
        )
    }

    pub fn certificate_report(&self) -> Result<CertificateReport, AppError> {
        let c = &self.cfg.certificate;
        Ok(validate_certificate(
            &self.setup.cert,
            &self.setup.plant.plant,
            c.samples,
            c.seed,
            c.tolerance,
        )?)
    }

    pub fn abstraction(&self) -> Result<Abstraction, AppError> {
        Ok(Abstraction::new(
            self.setup.plant.plant.clone(),
            self.setup.cert.clone(),
            self.setup.abs_cfg.clone(),
        )?
        .with_burst_limit(self.cfg.abstraction.burst_limit))
    }

    fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            pair_budget: self.cfg.synthesis.pair_budget,
            state_budget: self.cfg.abstraction.state_budget,
        }
    }

    /// Synthesis with wave expansion spread over `pool`, then refinement.
    pub fn synthesize(&self, pool: &rayon::ThreadPool) -> Result<Synthesized, AppError> {
        let report = self.param_report();
        if !report.ok() {
            let names: Vec<String> = report
                .failures()
                .iter()
                .map(|c| format!("condition {} violated ({} vs {})", c.name, c.lhs, c.rhs))
                .collect();
            return Err(AppError::new(EXIT_INVALID, names.join("; ")));
        }
        let spec = self.spec()?;
        let abs = self.abstraction()?;
        let b = &self.setup.bounds;
        let lifted = lift_spec(spec, b.n_min, b.n_max, self.cfg.synthesis.lift_budget)?;
        let seeds = abs.initial_states(self.cfg.abstraction.state_budget)?;
        let syn = synthesize(
            seeds,
            |x| abs.output(x),
            |wave: &[AggregateState]| -> Result<_, SynthError> {
                pool.install(|| {
                    wave.par_iter()
                        .map(|x| abs.expand(x).map_err(SynthError::from))
                        .collect()
                })
            },
            &lifted,
            self.setup.abs_cfg.mu_max(),
            self.options(),
        )?;
        verify_witnesses(&syn, &lifted, self.setup.abs_cfg.mu_max())?;
        let controller = refine(
            &syn.controller,
            self.setup.abs_cfg.mu_x.clone(),
            self.setup.plant.plant.inputs().to_vec(),
            (b.n_min, b.n_max),
            &self.cfg.synthesis.selection()?,
        )?;
        controller
            .check_against(&syn.controller)
            .map_err(|e| AppError::new(EXIT_RUNTIME, format!("refinement check: {}", e)))?;
        Ok(Synthesized {
            syn,
            lifted,
            controller,
        })
    }

    /// Initial state for run `run`: the configured one, or a draw from the
    /// initial set whose quantization the controller accepts.
    pub fn initial_state(&self, ctrl: &MealyController, run: usize) -> Result<Vec<f64>, AppError> {
        let plant = &self.setup.plant;
        if let Some(x0) = &self.cfg.simulation.x0 {
            return Ok(plant.state_map.to_normalized(x0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.simulation.seed.wrapping_add(run as u64) ^ 0x5eed);
        let rects = plant.plant.init_box().rects();
        for _ in 0..10_000 {
            let r = &rects[rng.gen_range(0..rects.len())];
            let x: Vec<f64> = (0..r.dim())
                .map(|i| r.lo[i] + rng.gen::<f64>() * r.side(i))
                .collect();
            let Ok(q) = self.setup.lattice.quantize(&x) else {
                continue;
            };
            if ctrl.initial_state(&q).is_ok() {
                return Ok(x);
            }
        }
        Err(AppError::new(
            EXIT_RUNTIME,
            "no initial state drawn from the initial set is accepted by the controller",
        ))
    }

    /// One closed-loop run with its verdict.
    pub fn simulate_one(&self, ctrl: &MealyController, run: usize) -> Result<RunResult, AppError> {
        let x0 = self.initial_state(ctrl, run)?;
        let mut sampler = DelaySampler::new(self.cfg.simulation.policy(run)?);
        let trace = run_loop(
            &self.setup.plant.plant,
            ctrl,
            &x0,
            &self.setup.bounds,
            &mut sampler,
            self.cfg.simulation.horizon,
        )?;
        trace
            .check_invariants(&self.setup.lattice, self.setup.plant.plant.u_ref() as u32)
            .map_err(|e| AppError::new(EXIT_RUNTIME, format!("trace invariant violated: {}", e)))?;
        let verdict = match &self.spec {
            Some(q) => Some(verify_trace(&trace.y_tilde, q, self.setup.abs_cfg.epsilon)),
            None => None,
        };
        Ok(RunResult {
            run,
            x0,
            trace,
            verdict,
        })
    }

    /// `runs` closed-loop runs in parallel, returned in run order.
    pub fn simulate(
        &self,
        ctrl: &MealyController,
        runs: usize,
        pool: &rayon::ThreadPool,
    ) -> Result<Vec<RunResult>, AppError> {
        pool.install(|| {
            (0..runs)
                .into_par_iter()
                .map(|r| self.simulate_one(ctrl, r))
                .collect()
        })
    }
}

pub struct Synthesized {
    pub syn: Synthesis<AggregateState>,
    pub lifted: LiftedSpec,
    pub controller: MealyController,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    /// Initial state in working coordinates.
    pub x0: Vec<f64>,
    pub trace: LoopTrace,
    pub verdict: Option<Verdict>,
}

/// A pool capped at `jobs` workers (0 means one per core).
pub fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool")
}
