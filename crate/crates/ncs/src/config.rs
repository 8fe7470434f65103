//! Run configuration: one TOML file fully describing a run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ncs_core::abstraction::{
    AbstractionConfig, LyapunovCertificate, Variant,
};
use ncs_core::network::{compute_delay_bounds, DelayBounds, DelayPolicy, NetworkParams};
use ncs_core::plant::expr::ExprField;
use ncs_core::plant::models::{LinearField, SingleTrack};
use ncs_core::plant::{
    normalize, AffineMap, BoxUnion, Lattice, OdeOptions, PlantModel, Rect, VectorField,
};
use ncs_core::refine::SelectionPolicy;
use serde::Deserialize;

/// A configuration problem, with the offending field when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub msg: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "{}", self.msg)
        } else {
            write!(f, "{}: {}", self.field, self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub plant: PlantSection,
    pub certificate: CertSection,
    pub network: NetworkSection,
    pub abstraction: AbsSection,
    pub spec: Option<SpecRef>,
    #[serde(default)]
    pub synthesis: SynthSection,
    #[serde(default)]
    pub simulation: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// `linear`, `single_track` or `expression`.
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub a_matrix: Option<Vec<Vec<f64>>>,
    pub b_matrix: Option<Vec<Vec<f64>>>,
    /// One expression per state component (`expression` model).
    pub field: Option<Vec<String>>,
    pub dim_u: Option<usize>,
    pub state: Vec<BoxSpec>,
    pub init: Vec<BoxSpec>,
    /// Explicit input list, or
    pub inputs: Option<Vec<Vec<f64>>>,
    /// per-axis value lists whose product forms the input set.
    pub input_grid: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub input_names: Vec<String>,
    pub tau: f64,
    #[serde(default)]
    pub u_ref: usize,
    #[serde(default)]
    pub normalize: bool,
    pub ode_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertSection {
    /// `inf_norm` or `half_squared`.
    pub kind: String,
    pub lambda: f64,
    pub gamma_gain: Option<f64>,
    #[serde(default = "default_cert_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_cert_tol")]
    pub tolerance: f64,
}

fn default_cert_samples() -> usize {
    2000
}

fn default_seed() -> u64 {
    1
}

fn default_cert_tol() -> f64 {
    1e-7
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Direct discrete bounds; when given, the channel parameters are
    /// optional and only reported.
    pub n_min: Option<u32>,
    pub n_max: Option<u32>,
    pub b_min: Option<f64>,
    pub b_max: Option<f64>,
    pub overhead_pc: Option<f64>,
    pub overhead_cp: Option<f64>,
    pub d_req: Option<[f64; 2]>,
    pub d_net: Option<[f64; 2]>,
    pub d_ctrl: Option<[f64; 2]>,
    #[serde(default)]
    pub n_pd: u32,
    /// Cardinalities encoded in messages; default to the lattice and the
    /// input set of the run.
    pub state_count: Option<u128>,
    pub input_count: Option<u128>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MuSpec {
    Scalar(f64),
    PerAxis(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AbsSection {
    /// `fc` or `gas`.
    pub variant: String,
    pub mu_x: MuSpec,
    pub epsilon: f64,
    pub theta: f64,
    #[serde(default = "default_burst_limit")]
    pub burst_limit: usize,
    #[serde(default = "default_state_budget")]
    pub state_budget: usize,
}

fn default_burst_limit() -> usize {
    1_000_000
}

fn default_state_budget() -> usize {
    2_000_000
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecRef {
    pub path: String,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    #[serde(default = "default_pair_budget")]
    pub pair_budget: usize,
    #[serde(default = "default_lift_budget")]
    pub lift_budget: usize,
    /// `first`, `random` or `priority`.
    #[serde(default = "default_selection")]
    pub selection: String,
    #[serde(default)]
    pub selection_seed: u64,
    #[serde(default)]
    pub priority: Vec<u32>,
}

fn default_pair_budget() -> usize {
    5_000_000
}

fn default_lift_budget() -> usize {
    2_000_000
}

fn default_selection() -> String {
    "first".into()
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            pair_budget: default_pair_budget(),
            lift_budget: default_lift_budget(),
            selection: default_selection(),
            selection_seed: 0,
            priority: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// `uniform`, `fixed`, `worst`, `best` or `sequence`.
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub fixed: Option<u32>,
    #[serde(default)]
    pub sequence: Vec<u32>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Initial state; when absent each run draws one from the initial set.
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_dense")]
    pub dense: usize,
}

fn default_policy() -> String {
    "uniform".into()
}

fn default_horizon() -> usize {
    94
}

fn default_runs() -> usize {
    1
}

fn default_dense() -> usize {
    1
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            policy: default_policy(),
            seed: default_seed(),
            fixed: None,
            sequence: Vec::new(),
            horizon: default_horizon(),
            runs: default_runs(),
            x0: None,
            dense: default_dense(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir() }
    }
}

/// Parses a configuration, reporting TOML errors with line and column.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str(text).map_err(|e| toml_error(text, &e))
}

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let loc = e.span().map(|s| {
        let before = &text[..s.start.min(text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
        format!("line {}, column {}", line, col)
    });
    ConfigError::new(loc.unwrap_or_default(), e.message().trim().to_string())
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}

fn rects(field: &str, boxes: &[BoxSpec]) -> Result<BoxUnion, ConfigError> {
    let rs = boxes
        .iter()
        .map(|b| Rect::new(b.lo.clone(), b.hi.clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ConfigError::new(field, e.to_string()))?;
    BoxUnion::new(rs).map_err(|e| ConfigError::new(field, e.to_string()))
}

fn product(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// The plant as configured, plus its working-coordinate form.
#[derive(Debug, Clone)]
pub struct BuiltPlant {
    /// Physical plant.
    pub physical: PlantModel,
    /// Plant in working coordinates (normalized when requested).
    pub plant: PlantModel,
    pub state_map: AffineMap,
    pub input_map: AffineMap,
    pub input_names: Vec<String>,
}

impl BuiltPlant {
    /// Physical value of input `id`.
    pub fn physical_input(&self, id: usize) -> Vec<f64> {
        self.physical.input(id).to_vec()
    }
}

impl PlantSection {
    pub fn build(&self) -> Result<BuiltPlant, ConfigError> {
        let field: Arc<dyn VectorField> = match self.model.as_str() {
            "linear" => {
                let a = self
                    .a_matrix
                    .clone()
                    .ok_or_else(|| ConfigError::new("plant.a_matrix", "required by the linear model"))?;
                let b = self
                    .b_matrix
                    .clone()
                    .ok_or_else(|| ConfigError::new("plant.b_matrix", "required by the linear model"))?;
                if a.iter().any(|r| r.len() != a.len()) || b.len() != a.len() {
                    return Err(ConfigError::new("plant.a_matrix", "shape mismatch"));
                }
                Arc::new(LinearField::new(a, b))
            }
            "single_track" => {
                let get = |k: &str| {
                    self.params
                        .get(k)
                        .copied()
                        .ok_or_else(|| ConfigError::new(format!("plant.params.{}", k), "missing"))
                };
                Arc::new(SingleTrack::new(get("a")?, get("b")?))
            }
            "expression" => {
                let comps = self
                    .field
                    .clone()
                    .ok_or_else(|| ConfigError::new("plant.field", "required by the expression model"))?;
                let dim_u = self
                    .dim_u
                    .ok_or_else(|| ConfigError::new("plant.dim_u", "required by the expression model"))?;
                Arc::new(
                    ExprField::parse(&comps, dim_u, &self.params)
                        .map_err(|e| ConfigError::new("plant.field", e.to_string()))?,
                )
            }
            other => {
                return Err(ConfigError::new(
                    "plant.model",
                    format!("unknown model {:?} (expected linear, single_track or expression)", other),
                ))
            }
        };
        let inputs = match (&self.inputs, &self.input_grid) {
            (Some(list), None) => list.clone(),
            (None, Some(axes)) => product(axes),
            _ => {
                return Err(ConfigError::new(
                    "plant.inputs",
                    "give exactly one of inputs and input_grid",
                ))
            }
        };
        let input_names = if self.input_names.is_empty() {
            (0..inputs.len()).map(|i| format!("u{}", i)).collect()
        } else if self.input_names.len() == inputs.len() {
            self.input_names.clone()
        } else {
            return Err(ConfigError::new("plant.input_names", "one name per input"));
        };
        let mut physical = PlantModel::new(
            field,
            rects("plant.state", &self.state)?,
            rects("plant.init", &self.init)?,
            inputs,
            self.tau,
            self.u_ref,
        )
        .map_err(|e| ConfigError::new("plant", e.to_string()))?;
        if let Some(tol) = self.ode_tol {
            physical = physical.with_ode_options(OdeOptions {
                tol,
                ..OdeOptions::default()
            });
        }
        let (plant, state_map, input_map) = if self.normalize {
            let n = normalize(&physical).map_err(|e| ConfigError::new("plant.normalize", e.to_string()))?;
            (n.plant, n.state_map, n.input_map)
        } else {
            (
                physical.clone(),
                AffineMap::identity(physical.dim_x()),
                AffineMap::identity(physical.dim_u()),
            )
        };
        Ok(BuiltPlant {
            physical,
            plant,
            state_map,
            input_map,
            input_names,
        })
    }
}

impl CertSection {
    pub fn build(&self, dim: usize) -> Result<LyapunovCertificate, ConfigError> {
        match self.kind.as_str() {
            "inf_norm" => Ok(LyapunovCertificate::inf_norm(self.lambda)),
            "half_squared" => {
                let g = self
                    .gamma_gain
                    .ok_or_else(|| ConfigError::new("certificate.gamma_gain", "required by half_squared"))?;
                Ok(LyapunovCertificate::half_squared(self.lambda, dim, g))
            }
            other => Err(ConfigError::new(
                "certificate.kind",
                format!("unknown certificate {:?} (expected inf_norm or half_squared)", other),
            )),
        }
    }
}

impl AbsSection {
    pub fn variant(&self) -> Result<Variant, ConfigError> {
        match self.variant.as_str() {
            "fc" => Ok(Variant::Fc),
            "gas" => Ok(Variant::Gas),
            other => Err(ConfigError::new(
                "abstraction.variant",
                format!("unknown variant {:?} (expected fc or gas)", other),
            )),
        }
    }

    pub fn mu_vec(&self, dim: usize) -> Result<Vec<f64>, ConfigError> {
        let mu = match &self.mu_x {
            MuSpec::Scalar(m) => vec![*m; dim],
            MuSpec::PerAxis(v) if v.len() == dim => v.clone(),
            MuSpec::PerAxis(v) => {
                return Err(ConfigError::new(
                    "abstraction.mu_x",
                    format!("{} entries for dimension {}", v.len(), dim),
                ))
            }
        };
        if mu.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(ConfigError::new("abstraction.mu_x", "steps must be positive"));
        }
        Ok(mu)
    }
}

impl NetworkSection {
    /// Channel parameters, when all of them are present.
    pub fn params(&self, tau: f64) -> Result<Option<NetworkParams>, ConfigError> {
        let (Some(b_min), Some(b_max), Some(d_req), Some(d_net), Some(d_ctrl)) =
            (self.b_min, self.b_max, self.d_req, self.d_net, self.d_ctrl)
        else {
            return Ok(None);
        };
        let p = NetworkParams {
            b_min,
            b_max,
            n_pc_plus: self.overhead_pc.unwrap_or(0.0),
            n_cp_plus: self.overhead_cp.unwrap_or(0.0),
            d_req_min: d_req[0],
            d_req_max: d_req[1],
            d_net_min: d_net[0],
            d_net_max: d_net[1],
            d_ctrl_min: d_ctrl[0],
            d_ctrl_max: d_ctrl[1],
            n_pd: self.n_pd,
            tau,
        };
        p.validate().map_err(|e| ConfigError::new("network", e.to_string()))?;
        Ok(Some(p))
    }

    /// Delay bounds: direct bounds win; otherwise computed from the channel.
    pub fn bounds(
        &self,
        tau: f64,
        lattice_count: u128,
        n_inputs: u128,
    ) -> Result<DelayBounds, ConfigError> {
        match (self.n_min, self.n_max) {
            (Some(lo), Some(hi)) => {
                if !(1 <= lo && lo <= hi) {
                    return Err(ConfigError::new("network.n_min", "need 1 <= n_min <= n_max"));
                }
                Ok(DelayBounds::discrete(lo, hi))
            }
            (None, None) => {
                let p = self.params(tau)?.ok_or_else(|| {
                    ConfigError::new(
                        "network",
                        "give n_min/n_max or all of b_min, b_max, d_req, d_net, d_ctrl",
                    )
                })?;
                compute_delay_bounds(
                    &p,
                    self.state_count.unwrap_or(lattice_count),
                    self.input_count.unwrap_or(n_inputs),
                )
                .map_err(|e| ConfigError::new("network", e.to_string()))
            }
            _ => Err(ConfigError::new("network.n_max", "n_min and n_max go together")),
        }
    }
}

impl SimSection {
    /// Delay policy for run `run` (seeds advance by run index).
    pub fn policy(&self, run: usize) -> Result<DelayPolicy, ConfigError> {
        match self.policy.as_str() {
            "uniform" => Ok(DelayPolicy::Uniform {
                seed: self.seed.wrapping_add(run as u64),
            }),
            "fixed" => Ok(DelayPolicy::Fixed(self.fixed.ok_or_else(|| {
                ConfigError::new("simulation.fixed", "required by the fixed policy")
            })?)),
            "worst" => Ok(DelayPolicy::WorstCase),
            "best" => Ok(DelayPolicy::BestCase),
            "sequence" => Ok(DelayPolicy::Adversarial(self.sequence.clone())),
            other => Err(ConfigError::new(
                "simulation.policy",
                format!("unknown policy {:?}", other),
            )),
        }
    }
}

impl SynthSection {
    pub fn selection(&self) -> Result<SelectionPolicy, ConfigError> {
        match self.selection.as_str() {
            "first" => Ok(SelectionPolicy::FirstCanonical),
            "random" => Ok(SelectionPolicy::Random(self.selection_seed)),
            "priority" => Ok(SelectionPolicy::Priority(self.priority.clone())),
            other => Err(ConfigError::new(
                "synthesis.selection",
                format!("unknown selection {:?} (expected first, random or priority)", other),
            )),
        }
    }
}

/// Everything derived from a configuration before any heavy computation.
#[derive(Debug, Clone)]
pub struct Setup {
    pub plant: BuiltPlant,
    pub cert: LyapunovCertificate,
    pub lattice: Lattice,
    pub bounds: DelayBounds,
    pub abs_cfg: AbstractionConfig,
}

impl RunConfig {
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let plant = self.plant.build()?;
        let dim = plant.plant.dim_x();
        let cert = self.certificate.build(dim)?;
        let mu = self.abstraction.mu_vec(dim)?;
        let lattice = Lattice::new(mu.clone(), plant.plant.state_box().clone())
            .map_err(|e| ConfigError::new("abstraction.mu_x", e.to_string()))?;
        let bounds = self.network.bounds(
            plant.plant.tau(),
            lattice.count(),
            plant.plant.inputs().len() as u128,
        )?;
        let abs_cfg = AbstractionConfig {
            mu_x: mu,
            delay_bounds: bounds.clone(),
            variant: self.abstraction.variant()?,
            epsilon: self.abstraction.epsilon,
            theta: self.abstraction.theta,
        };
        Ok(Setup {
            plant,
            cert,
            lattice,
            bounds,
            abs_cfg,
        })
    }

    /// Spec path resolved against the directory of the config file.
    pub fn spec_path(&self, config_dir: &Path) -> Option<PathBuf> {
        self.spec.as_ref().map(|s| {
            let p = PathBuf::from(&s.path);
            if p.is_absolute() {
                p
            } else {
                config_dir.join(p)
            }
        })
    }
}
