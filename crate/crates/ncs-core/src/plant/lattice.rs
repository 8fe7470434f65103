//! Hyperrectangle unions, the lattices `[A]_mu = mu Z^n ∩ A`, and quantizers.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

/// Slack used for membership tests, so integration noise at the boundary
/// does not push a point outside its box.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Integer lattice coordinates: the real point is `k[i] * mu[i]`.
pub type LatticePoint = Vec<i64>;

/// Errors raised by box and lattice operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("box side {axis} is empty or inverted ({lo} > {hi})")]
    InvertedBox { axis: usize, lo: f64, hi: f64 },
    #[error("box union has no hyperrectangles")]
    EmptyUnion,
    #[error("quantization step on axis {axis} must be positive, got {mu}")]
    NonPositiveStep { axis: usize, mu: f64 },
    #[error("condition mu <= mu_hat violated on axis {axis}: mu = {mu}, mu_hat = {mu_hat}")]
    StepExceedsMuHat { axis: usize, mu: f64, mu_hat: f64 },
    #[error("point lies outside the quantized box")]
    OutsideBox,
    #[error("lattice has {count} points, over the enumeration budget {budget}")]
    CapacityExceeded { count: u128, budget: u128 },
}

/// A closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, LatticeError> {
        if lo.len() != hi.len() {
            return Err(LatticeError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (axis, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l <= h) {
                return Err(LatticeError::InvertedBox { axis, lo: l, hi: h });
            }
        }
        Ok(Rect { lo, hi })
    }

    /// The box `[-r, r]^n`.
    pub fn symmetric(r: &[f64]) -> Self {
        Rect {
            lo: r.iter().map(|v| -v).collect(),
            hi: r.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }
}

/// A finite union of hyperrectangles, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxUnion {
    rects: Vec<Rect>,
}

impl BoxUnion {
    pub fn new(rects: Vec<Rect>) -> Result<Self, LatticeError> {
        let first = rects.first().ok_or(LatticeError::EmptyUnion)?;
        let n = first.dim();
        for r in &rects {
            if r.dim() != n {
                return Err(LatticeError::DimensionMismatch {
                    expected: n,
                    got: r.dim(),
                });
            }
        }
        Ok(BoxUnion { rects })
    }

    pub fn single(rect: Rect) -> Self {
        BoxUnion { rects: vec![rect] }
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn dim(&self) -> usize {
        self.rects[0].dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.find(x, BOUNDARY_TOL).is_some()
    }

    /// Index of the first rectangle (declaration order) containing `x`.
    pub fn find(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.rects.iter().position(|r| r.contains(x, tol))
    }

    /// Minimum side length over all rectangles and axes.
    pub fn mu_hat(&self) -> f64 {
        (0..self.dim())
            .map(|a| self.mu_hat_axis(a))
            .fold(f64::INFINITY, libm::fmin)
    }

    /// Minimum side length along one axis.
    pub fn mu_hat_axis(&self, axis: usize) -> f64 {
        self.rects
            .iter()
            .map(|r| r.side(axis))
            .fold(f64::INFINITY, libm::fmin)
    }

    /// Smallest box containing the union.
    pub fn hull(&self) -> Rect {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for r in &self.rects {
            for i in 0..n {
                lo[i] = libm::fmin(lo[i], r.lo[i]);
                hi[i] = libm::fmax(hi[i], r.hi[i]);
            }
        }
        Rect { lo, hi }
    }

    /// True when every rectangle of `other` lies inside some rectangle of `self`.
    pub fn covers(&self, other: &BoxUnion) -> bool {
        other.rects.iter().all(|o| {
            self.rects
                .iter()
                .any(|r| r.contains(&o.lo, BOUNDARY_TOL) && r.contains(&o.hi, BOUNDARY_TOL))
        })
    }
}

/// Inclusive integer index range of lattice points along one axis of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct AxisRange {
    lo: i64,
    hi: i64,
}

impl AxisRange {
    fn count(&self) -> u128 {
        if self.hi < self.lo {
            0
        } else {
            (self.hi - self.lo + 1) as u128
        }
    }
}

/// The lattice `[A]_mu` over a box union, with one step per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    mu: Vec<f64>,
    region: BoxUnion,
    ranges: Vec<Vec<AxisRange>>,
}

impl Lattice {
    /// A lattice with the same step on every axis.
    pub fn uniform(mu: f64, region: BoxUnion) -> Result<Self, LatticeError> {
        let n = region.dim();
        Lattice::new(vec![mu; n], region)
    }

    pub fn new(mu: Vec<f64>, region: BoxUnion) -> Result<Self, LatticeError> {
        if mu.len() != region.dim() {
            return Err(LatticeError::DimensionMismatch {
                expected: region.dim(),
                got: mu.len(),
            });
        }
        for (axis, &m) in mu.iter().enumerate() {
            if !(m > 0.0) {
                return Err(LatticeError::NonPositiveStep { axis, mu: m });
            }
            let mu_hat = region.mu_hat_axis(axis);
            if m > mu_hat * (1.0 + 1e-12) {
                return Err(LatticeError::StepExceedsMuHat { axis, mu: m, mu_hat });
            }
        }
        let ranges = region
            .rects()
            .iter()
            .map(|r| {
                (0..r.dim())
                    .map(|i| AxisRange {
                        lo: libm::ceil(r.lo[i] / mu[i] - BOUNDARY_TOL) as i64,
                        hi: libm::floor(r.hi[i] / mu[i] + BOUNDARY_TOL) as i64,
                    })
                    .collect()
            })
            .collect();
        Ok(Lattice { mu, region, ranges })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Largest per-axis step; the scalar step used by parameter conditions.
    pub fn mu_max(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, libm::fmax)
    }

    pub fn region(&self) -> &BoxUnion {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn to_real(&self, k: &[i64]) -> Vec<f64> {
        k.iter().zip(&self.mu).map(|(&k, &m)| k as f64 * m).collect()
    }

    /// Nearest lattice point, ties rounded toward +infinity, clamped into the
    /// first rectangle (declaration order) that contains `a`.
    pub fn quantize(&self, a: &[f64]) -> Result<LatticePoint, LatticeError> {
        if a.len() != self.dim() {
            return Err(LatticeError::DimensionMismatch {
                expected: self.dim(),
                got: a.len(),
            });
        }
        let r = self
            .region
            .find(a, BOUNDARY_TOL)
            .ok_or(LatticeError::OutsideBox)?;
        Ok(a
            .iter()
            .zip(&self.mu)
            .zip(&self.ranges[r])
            .map(|((&v, &m), range)| {
                let k = libm::floor(v / m + 0.5) as i64;
                k.clamp(range.lo, range.hi)
            })
            .collect())
    }

    /// Nearest point of the unbounded lattice, ties rounded toward +infinity.
    /// Unlike [`Lattice::quantize`] this never clamps and never fails, so it
    /// may return a point outside the region.
    pub fn round(&self, a: &[f64]) -> LatticePoint {
        a.iter()
            .zip(&self.mu)
            .map(|(&v, &m)| libm::floor(v / m + 0.5) as i64)
            .collect()
    }

    pub fn contains_point(&self, k: &[i64]) -> bool {
        k.len() == self.dim()
            && self
                .ranges
                .iter()
                .any(|rs| k.iter().zip(rs).all(|(&v, r)| v >= r.lo && v <= r.hi))
    }

    /// Per-rectangle, per-axis point counts.
    pub fn axis_counts(&self) -> Vec<Vec<u128>> {
        self.ranges
            .iter()
            .map(|rs| rs.iter().map(AxisRange::count).collect())
            .collect()
    }

    /// Exact number of lattice points, by inclusion–exclusion over rectangles.
    pub fn count(&self) -> u128 {
        let m = self.ranges.len();
        if m > 20 {
            return self.enumerate(u128::MAX).map(|v| v.len() as u128).unwrap_or(0);
        }
        let mut total: i128 = 0;
        for mask in 1u32..(1u32 << m) {
            let mut inter: Vec<AxisRange> = Vec::new();
            let mut first = true;
            for (j, rs) in self.ranges.iter().enumerate() {
                if mask & (1 << j) == 0 {
                    continue;
                }
                if first {
                    inter = rs.clone();
                    first = false;
                } else {
                    for (a, b) in inter.iter_mut().zip(rs) {
                        a.lo = a.lo.max(b.lo);
                        a.hi = a.hi.min(b.hi);
                    }
                }
            }
            let c: u128 = inter.iter().map(AxisRange::count).product();
            if mask.count_ones() % 2 == 1 {
                total += c as i128;
            } else {
                total -= c as i128;
            }
        }
        total as u128
    }

    /// Every lattice point exactly once, in lexicographic order.
    pub fn enumerate(&self, budget: u128) -> Result<Vec<LatticePoint>, LatticeError> {
        let upper: u128 = self
            .ranges
            .iter()
            .map(|rs| rs.iter().map(AxisRange::count).product::<u128>())
            .sum();
        if upper > budget {
            let count = self.count();
            if count > budget {
                return Err(LatticeError::CapacityExceeded { count, budget });
            }
        }
        let mut out = BTreeSet::new();
        for rs in &self.ranges {
            if rs.iter().any(|r| r.count() == 0) {
                continue;
            }
            let lo: Vec<i64> = rs.iter().map(|r| r.lo).collect();
            let hi: Vec<i64> = rs.iter().map(|r| r.hi).collect();
            let mut k = lo.clone();
            loop {
                out.insert(k.clone());
                if !odometer(&mut k, &lo, &hi) {
                    break;
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Lattice points of the region within infinity-norm distance `radius`
    /// of `center` (given in lattice coordinates), in lexicographic order.
    pub fn ball(&self, center: &[i64], radius: f64) -> Vec<LatticePoint> {
        let n = self.dim();
        let reach: Vec<i64> = self
            .mu
            .iter()
            .map(|&m| libm::floor(radius / m + BOUNDARY_TOL).max(0.0) as i64)
            .collect();
        let mut out = Vec::new();
        let lo: Vec<i64> = (0..n).map(|i| center[i] - reach[i]).collect();
        let hi: Vec<i64> = (0..n).map(|i| center[i] + reach[i]).collect();
        let mut k = lo.clone();
        loop {
            if self.contains_point(&k) {
                out.push(k.clone());
            }
            if !odometer(&mut k, &lo, &hi) {
                break;
            }
        }
        out
    }

    /// Infinity-norm distance between two lattice points in real units.
    pub fn distance(&self, a: &[i64], b: &[i64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.mu)
            .map(|((&x, &y), &m)| libm::fabs((x - y) as f64 * m))
            .fold(0.0, libm::fmax)
    }
}

/// Advances `k` to the next point of the box `[lo, hi]` in lexicographic
/// order; returns false once the box is exhausted.
pub(crate) fn odometer(k: &mut [i64], lo: &[i64], hi: &[i64]) -> bool {
    for axis in (0..k.len()).rev() {
        if k[axis] < hi[axis] {
            k[axis] += 1;
            for j in axis + 1..k.len() {
                k[j] = lo[j];
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> BoxUnion {
        BoxUnion::single(Rect::new(vec![lo], vec![hi]).unwrap())
    }

    #[test]
    fn quantize_examples() {
        let l = Lattice::uniform(0.5, interval(-1.0, 1.0)).unwrap();
        assert_eq!(l.quantize(&[0.5]).unwrap(), vec![1]);
        assert_eq!(l.quantize(&[0.26]).unwrap(), vec![1]);
        // Exact tie goes up.
        assert_eq!(l.quantize(&[0.25]).unwrap(), vec![1]);
        assert_eq!(l.quantize(&[-0.25]).unwrap(), vec![0]);
        assert!(l.quantize(&[1.5]).is_err());
    }

    #[test]
    fn quantize_vehicle_step() {
        let b = BoxUnion::single(Rect::symmetric(&[1.0, 1.0, 1.0]));
        let l = Lattice::uniform(0.005, b).unwrap();
        let k = l.quantize(&[0.0026, -0.0026, 0.0]).unwrap();
        assert_eq!(k, vec![1, -1, 0]);
        let x = l.to_real(&k);
        assert!((x[0] - 0.005).abs() < 1e-15 && (x[1] + 0.005).abs() < 1e-15);
    }

    #[test]
    fn counts() {
        let l = Lattice::uniform(1.0, interval(-1.0, 1.0)).unwrap();
        assert_eq!(l.enumerate(100).unwrap(), vec![vec![-1], vec![0], vec![1]]);
        let u = BoxUnion::new(vec![
            Rect::new(vec![0.0], vec![1.0]).unwrap(),
            Rect::new(vec![2.0], vec![3.0]).unwrap(),
        ])
        .unwrap();
        let l = Lattice::uniform(0.5, u).unwrap();
        assert_eq!(l.count(), 6);
        assert_eq!(l.enumerate(100).unwrap().len(), 6);
        let cube = BoxUnion::single(Rect::symmetric(&[1.0, 1.0, 1.0]));
        let l = Lattice::uniform(0.005, cube).unwrap();
        assert_eq!(l.axis_counts(), vec![vec![401, 401, 401]]);
        assert_eq!(l.count(), 401u128.pow(3));
        assert!(matches!(
            l.enumerate(1000),
            Err(LatticeError::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn overlapping_union_counts_once() {
        let u = BoxUnion::new(vec![
            Rect::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(),
            Rect::new(vec![1.0, 0.0], vec![3.0, 1.0]).unwrap(),
        ])
        .unwrap();
        let l = Lattice::uniform(1.0, u).unwrap();
        assert_eq!(l.count(), 8);
        assert_eq!(l.enumerate(100).unwrap().len(), 8);
    }

    #[test]
    fn step_above_mu_hat_rejected() {
        assert!(matches!(
            Lattice::uniform(3.0, interval(-1.0, 1.0)),
            Err(LatticeError::StepExceedsMuHat { .. })
        ));
    }

    #[test]
    fn ball_is_clipped_to_region() {
        let l = Lattice::uniform(0.5, interval(-1.0, 1.0)).unwrap();
        assert_eq!(l.ball(&[2], 1.0), vec![vec![0], vec![1], vec![2]]);
    }
}
