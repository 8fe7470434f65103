//! Built-in vector fields.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::VectorField;

/// `x' = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl LinearField {
    /// `a` is n x n and `b` is n x m, both row-major.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Self {
        LinearField { a, b }
    }
}

impl VectorField for LinearField {
    fn dim_x(&self) -> usize {
        self.a.len()
    }

    fn dim_u(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for (i, d) in dx.iter_mut().enumerate() {
            let ax: f64 = self.a[i].iter().zip(x).map(|(a, x)| a * x).sum();
            let bu: f64 = self.b[i].iter().zip(u).map(|(b, u)| b * u).sum();
            *d = ax + bu;
        }
    }
}

/// Kinematic single-track vehicle: state (position x, position y, heading),
/// input (rear wheel speed, steering angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleTrack {
    /// Distance of the center of mass from the rear axle.
    pub a: f64,
    /// Wheel base.
    pub b: f64,
}

impl SingleTrack {
    pub fn new(a: f64, b: f64) -> Self {
        SingleTrack { a, b }
    }

    /// Side-slip angle at the center of mass for steering angle `u2`.
    pub fn slip(&self, u2: f64) -> f64 {
        libm::atan(self.a * libm::tan(u2) / self.b)
    }
}

impl VectorField for SingleTrack {
    fn dim_x(&self) -> usize {
        3
    }

    fn dim_u(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let d = self.slip(u[1]);
        let c = libm::cos(d);
        dx[0] = u[0] * libm::cos(x[2] + d) / c;
        dx[1] = u[0] * libm::sin(x[2] + d) / c;
        dx[2] = u[0] / self.b * libm::tan(u[1]);
    }
}

/// A vector field given by a closure.
pub struct FnField {
    dim_x: usize,
    dim_u: usize,
    f: Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>,
}

impl FnField {
    pub fn new(
        dim_x: usize,
        dim_u: usize,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnField {
            dim_x,
            dim_u,
            f: Box::new(f),
        }
    }
}

impl VectorField for FnField {
    fn dim_x(&self) -> usize {
        self.dim_x
    }

    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        (self.f)(x, u, dx)
    }
}
