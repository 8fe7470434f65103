//! Component-wise affine rescaling of a plant onto unit boxes.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::{BoxUnion, PlantError, PlantModel, Rect, VectorField};

/// `physical = offset + scale * normalized`, per component.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        AffineMap {
            offset: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn to_physical(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| o + s * v)
            .collect()
    }

    pub fn to_normalized(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    fn map_rect(&self, r: &Rect) -> Rect {
        Rect {
            lo: self.to_normalized(&r.lo),
            hi: self.to_normalized(&r.hi),
        }
    }

    fn map_union(&self, b: &BoxUnion) -> BoxUnion {
        BoxUnion::new(b.rects().iter().map(|r| self.map_rect(r)).collect())
            .expect("affine image of a valid union")
    }

    /// Sends `[0, hi]` to `[0, 1]` and any other `[lo, hi]` to `[-1, 1]`.
    fn for_range(lo: f64, hi: f64) -> (f64, f64) {
        if lo == 0.0 {
            (0.0, hi)
        } else {
            ((lo + hi) / 2.0, (hi - lo) / 2.0)
        }
    }
}

/// A plant in normalized coordinates together with the maps back to the
/// physical ones.
#[derive(Debug, Clone)]
pub struct NormalizedPlant {
    pub plant: PlantModel,
    pub state_map: AffineMap,
    pub input_map: AffineMap,
}

struct NormalizedField {
    inner: Arc<dyn VectorField>,
    state: AffineMap,
    input: AffineMap,
}

impl VectorField for NormalizedField {
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }

    fn dim_u(&self) -> usize {
        self.inner.dim_u()
    }

    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let xp = self.state.to_physical(x);
        let up = self.input.to_physical(u);
        self.inner.eval(&xp, &up, dx);
        for (d, s) in dx.iter_mut().zip(&self.state.scale) {
            *d /= s;
        }
    }
}

/// Rescales each state axis of the hull of `X` and each input axis of the
/// hull of `U`. Input axes with a single value are left unscaled.
pub fn normalize(p: &PlantModel) -> Result<NormalizedPlant, PlantError> {
    let hull = p.state_box().hull();
    let mut state = AffineMap::identity(p.dim_x());
    for axis in 0..p.dim_x() {
        let (lo, hi) = (hull.lo[axis], hull.hi[axis]);
        if !(hi > lo) {
            return Err(PlantError::DegenerateAxis { axis });
        }
        let (o, s) = AffineMap::for_range(lo, hi);
        state.offset[axis] = o;
        state.scale[axis] = s;
    }
    let mut input = AffineMap::identity(p.dim_u());
    for axis in 0..p.dim_u() {
        let lo = p.inputs().iter().map(|u| u[axis]).fold(f64::INFINITY, libm::fmin);
        let hi = p
            .inputs()
            .iter()
            .map(|u| u[axis])
            .fold(f64::NEG_INFINITY, libm::fmax);
        if hi > lo {
            let (o, s) = AffineMap::for_range(lo, hi);
            input.offset[axis] = o;
            input.scale[axis] = s;
        }
    }
    let field = Arc::new(NormalizedField {
        inner: p.field().clone(),
        state: state.clone(),
        input: input.clone(),
    });
    let plant = PlantModel::new(
        field,
        state.map_union(p.state_box()),
        state.map_union(p.init_box()),
        p.inputs().iter().map(|u| input.to_normalized(u)).collect(),
        p.tau(),
        p.u_ref(),
    )?
    .with_ode_options(*p.ode_options());
    Ok(NormalizedPlant {
        plant,
        state_map: state,
        input_map: input,
    })
}
