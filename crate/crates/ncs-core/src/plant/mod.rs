//! Continuous plants, the sampled flow map, lattices and quantizers.

pub mod expr;
pub mod lattice;
pub mod models;
pub mod normalize;
pub mod ode;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use lattice::{BoxUnion, Lattice, LatticeError, LatticePoint, Rect, BOUNDARY_TOL};
pub use normalize::{normalize, AffineMap, NormalizedPlant};
pub use ode::{OdeError, OdeOptions};

/// A right-hand side `f(x, u)`.
pub trait VectorField: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_u(&self) -> usize;
    /// Writes `f(x, u)` into `dx`.
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
}

/// Errors raised while building or integrating a plant.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlantError {
    #[error("sampling time must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("input set is empty")]
    NoInputs,
    #[error("reference input index {0} is not in the input set")]
    BadReferenceInput(usize),
    #[error("input {index} has dimension {got}, expected {expected}")]
    InputDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("vector field dimension {field} does not match box dimension {boxed}")]
    StateDimension { field: usize, boxed: usize },
    #[error("initial box is not contained in the state box")]
    InitNotInState,
    #[error("vector field is not finite at a sampled point of X x U")]
    NotFinite,
    #[error("box side {axis} has zero width")]
    DegenerateAxis { axis: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("IntegrationDiverged: {0}")]
    IntegrationDiverged(#[from] OdeError),
}

/// A plant `x' = f(x, u)` on a state box, with a finite input set and a
/// sampling time.
#[derive(Clone)]
pub struct PlantModel {
    field: Arc<dyn VectorField>,
    state_box: BoxUnion,
    init_box: BoxUnion,
    inputs: Vec<Vec<f64>>,
    tau: f64,
    u_ref: usize,
    ode: OdeOptions,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("dim_x", &self.dim_x())
            .field("state_box", &self.state_box)
            .field("init_box", &self.init_box)
            .field("inputs", &self.inputs)
            .field("tau", &self.tau)
            .field("u_ref", &self.u_ref)
            .finish()
    }
}

impl PlantModel {
    /// Builds a plant and checks its invariants. `u_ref` indexes `inputs`.
    pub fn new(
        field: Arc<dyn VectorField>,
        state_box: BoxUnion,
        init_box: BoxUnion,
        inputs: Vec<Vec<f64>>,
        tau: f64,
        u_ref: usize,
    ) -> Result<Self, PlantError> {
        if !(tau > 0.0) {
            return Err(PlantError::NonPositiveTau(tau));
        }
        if inputs.is_empty() {
            return Err(PlantError::NoInputs);
        }
        if u_ref >= inputs.len() {
            return Err(PlantError::BadReferenceInput(u_ref));
        }
        if field.dim_x() != state_box.dim() || init_box.dim() != state_box.dim() {
            return Err(PlantError::StateDimension {
                field: field.dim_x(),
                boxed: state_box.dim(),
            });
        }
        for (index, u) in inputs.iter().enumerate() {
            if u.len() != field.dim_u() {
                return Err(PlantError::InputDimension {
                    index,
                    expected: field.dim_u(),
                    got: u.len(),
                });
            }
        }
        if !state_box.covers(&init_box) {
            return Err(PlantError::InitNotInState);
        }
        Ok(PlantModel {
            field,
            state_box,
            init_box,
            inputs,
            tau,
            u_ref,
            ode: OdeOptions::default(),
        })
    }

    pub fn with_ode_options(mut self, ode: OdeOptions) -> Self {
        self.ode = ode;
        self
    }

    pub fn dim_x(&self) -> usize {
        self.field.dim_x()
    }

    pub fn dim_u(&self) -> usize {
        self.field.dim_u()
    }

    pub fn field(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn state_box(&self) -> &BoxUnion {
        &self.state_box
    }

    pub fn init_box(&self) -> &BoxUnion {
        &self.init_box
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn input(&self, id: usize) -> &[f64] {
        &self.inputs[id]
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn u_ref(&self) -> usize {
        self.u_ref
    }

    pub fn ode_options(&self) -> &OdeOptions {
        &self.ode
    }

    /// State reached from `x` after `t` seconds under the constant input `u`.
    pub fn flow(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>, PlantError> {
        Ok(ode::integrate(&*self.field, x, u, t, &self.ode)?)
    }

    /// The sampled map: flow over one sampling interval under input `u_id`.
    pub fn step(&self, x: &[f64], u_id: usize) -> Result<Vec<f64>, PlantError> {
        self.flow(x, &self.inputs[u_id], self.tau)
    }

    /// Evaluates the vector field on a grid of `per_axis` points per axis of
    /// every state rectangle, for every input, and reports non-finite values.
    pub fn check_finite(&self, per_axis: usize) -> Result<(), PlantError> {
        let per_axis = per_axis.max(2);
        let n = self.dim_x();
        let mut dx = vec![0.0; n];
        for r in self.state_box.rects() {
            let lo = vec![0i64; n];
            let hi = vec![per_axis as i64 - 1; n];
            let mut k = lo.clone();
            loop {
                let x: Vec<f64> = (0..n)
                    .map(|i| r.lo[i] + r.side(i) * k[i] as f64 / (per_axis - 1) as f64)
                    .collect();
                for u in &self.inputs {
                    self.field.eval(&x, u, &mut dx);
                    if dx.iter().any(|v| !v.is_finite()) {
                        return Err(PlantError::NotFinite);
                    }
                }
                if !lattice::odometer(&mut k, &lo, &hi) {
                    break;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::models::{LinearField, SingleTrack};
    use super::*;

    fn scalar_decay(inputs: Vec<Vec<f64>>, tau: f64) -> PlantModel {
        let b = BoxUnion::single(Rect::symmetric(&[1.0]));
        PlantModel::new(
            Arc::new(LinearField::new(vec![vec![-1.0]], vec![vec![1.0]])),
            b.clone(),
            b,
            inputs,
            tau,
            0,
        )
        .unwrap()
    }

    #[test]
    fn flow_equilibrium_and_exponential() {
        let p = scalar_decay(vec![vec![0.0]], 1.0);
        assert_eq!(p.flow(&[0.0], &[0.0], 1.0).unwrap(), vec![0.0]);
        let x = p.flow(&[1.0], &[0.0], 1.0).unwrap();
        assert!((x[0] - libm::exp(-1.0)).abs() <= 1e-8);
    }

    #[test]
    fn vehicle_straight_line() {
        let v = SingleTrack::new(0.5, 1.5);
        let b = BoxUnion::single(Rect::symmetric(&[50.0, 50.0, core::f64::consts::PI]));
        let p = PlantModel::new(Arc::new(v), b.clone(), b, vec![vec![5.0, 0.0]], 1.0, 0).unwrap();
        let x = p.flow(&[0.0, 0.0, 0.0], &[5.0, 0.0], 1.0).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-9 && x[1].abs() < 1e-12 && x[2].abs() < 1e-12);
    }

    #[test]
    fn invariants_are_checked() {
        let b = BoxUnion::single(Rect::symmetric(&[1.0]));
        let f: Arc<dyn VectorField> =
            Arc::new(LinearField::new(vec![vec![-1.0]], vec![vec![1.0]]));
        assert!(matches!(
            PlantModel::new(f.clone(), b.clone(), b.clone(), vec![vec![0.0]], 0.0, 0),
            Err(PlantError::NonPositiveTau(_))
        ));
        assert!(matches!(
            PlantModel::new(f.clone(), b.clone(), b.clone(), vec![vec![0.0]], 1.0, 3),
            Err(PlantError::BadReferenceInput(3))
        ));
        let wide = BoxUnion::single(Rect::symmetric(&[2.0]));
        assert!(matches!(
            PlantModel::new(f, b, wide, vec![vec![0.0]], 1.0, 0),
            Err(PlantError::InitNotInState)
        ));
    }
}
