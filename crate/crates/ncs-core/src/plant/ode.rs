//! Adaptive Dormand–Prince 5(4) integration under a constant input.

use alloc::vec;
use alloc::vec::Vec;

use super::VectorField;

/// Step-size control for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Absolute (and relative) local error tolerance.
    pub tol: f64,
    /// Smallest admissible step before the integration is declared diverged.
    pub min_step: f64,
    /// Hard cap on accepted plus rejected steps.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            tol: 1e-9,
            min_step: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

/// Why an integration was abandoned.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum OdeError {
    #[error("integration diverged at t = {t}: step {step} below minimum")]
    StepCollapsed { t: f64, step: f64 },
    #[error("integration produced a non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("integration exceeded the step budget at t = {t}")]
    TooManySteps { t: f64 },
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `x' = f(x, u)` from `x0` over `[0, t]` with `u` held constant.
pub fn integrate(
    f: &dyn VectorField,
    x0: &[f64],
    u: &[f64],
    t: f64,
    opts: &OdeOptions,
) -> Result<Vec<f64>, OdeError> {
    let n = x0.len();
    let mut x = x0.to_vec();
    if t <= 0.0 {
        return Ok(x);
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut next = vec![0.0; n];

    f.eval(&x, u, &mut k1);
    let mut now = 0.0;
    let mut h = initial_step(&x, &k1, t, opts.tol);
    let mut steps = 0usize;

    while now < t {
        steps += 1;
        if steps > opts.max_steps {
            return Err(OdeError::TooManySteps { t: now });
        }
        let last = now + h >= t;
        if last {
            h = t - now;
        }

        stage(&x, h, &[(A21, &k1)], &mut tmp);
        f.eval(&tmp, u, &mut k2);
        stage(&x, h, &[(A31, &k1), (A32, &k2)], &mut tmp);
        f.eval(&tmp, u, &mut k3);
        stage(&x, h, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut tmp);
        f.eval(&tmp, u, &mut k4);
        stage(
            &x,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            &mut tmp,
        );
        f.eval(&tmp, u, &mut k5);
        stage(
            &x,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            &mut tmp,
        );
        f.eval(&tmp, u, &mut k6);
        stage(
            &x,
            h,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            &mut next,
        );
        f.eval(&next, u, &mut k7);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.tol + opts.tol * libm::fmax(libm::fabs(x[i]), libm::fabs(next[i]));
            let r = libm::fabs(e) / scale;
            if !r.is_finite() {
                err = f64::INFINITY;
                break;
            }
            err = libm::fmax(err, r);
        }

        if err <= 1.0 {
            if next.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { t: now });
            }
            now = if last { t } else { now + h };
            core::mem::swap(&mut x, &mut next);
            core::mem::swap(&mut k1, &mut k7);
        }

        let factor = if err == 0.0 {
            5.0
        } else if err.is_finite() {
            libm::fmin(5.0, libm::fmax(0.2, 0.9 * libm::pow(err, -0.2)))
        } else {
            0.2
        };
        h *= factor;
        if now < t && h < opts.min_step {
            return Err(OdeError::StepCollapsed { t: now, step: h });
        }
    }
    Ok(x)
}

fn stage(x: &[f64], h: f64, terms: &[(f64, &Vec<f64>)], out: &mut [f64]) {
    for i in 0..x.len() {
        let mut acc = 0.0;
        for (a, k) in terms {
            acc += a * k[i];
        }
        out[i] = x[i] + h * acc;
    }
}

fn initial_step(x: &[f64], dx: &[f64], t: f64, tol: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for i in 0..x.len() {
        let sc = tol + tol * libm::fabs(x[i]);
        d0 = libm::fmax(d0, libm::fabs(x[i]) / sc);
        d1 = libm::fmax(d1, libm::fabs(dx[i]) / sc);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    libm::fmin(libm::fmax(h, 1e-9), t)
}
