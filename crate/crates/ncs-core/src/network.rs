//! Delay calculus for a non-ideal network loop and delay sampling policies.
//!
//! A loop iteration sends the quantized state from plant to controller,
//! computes the control value, and sends it back. Each leg pays a bandwidth
//! delay (message bits over capacity), a network access wait and a delivery
//! delay; dropouts are folded in as extra worst-case delay.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Downward nudge applied before the delay-to-interval ceiling.
pub const CEIL_NUDGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid network parameter: {0}")]
    Invalid(&'static str),
    #[error("set cardinality must be at least 1")]
    EmptySet,
    #[error("PolicyExhausted: adversarial delay sequence ran out after {0} draws")]
    PolicyExhausted(usize),
    #[error("delay {n} outside the admissible range [{n_min}; {n_max}]")]
    OutOfRange { n: u32, n_min: u32, n_max: u32 },
}

/// Capacities, overheads, waits and dropout bound of the network loop.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    /// Channel capacities, bits per second.
    pub b_min: f64,
    pub b_max: f64,
    /// Relative protocol overheads of the plant-to-controller and
    /// controller-to-plant messages.
    pub n_pc_plus: f64,
    pub n_cp_plus: f64,
    /// Network access waits, seconds.
    pub d_req_min: f64,
    pub d_req_max: f64,
    /// Delivery delays, seconds.
    pub d_net_min: f64,
    pub d_net_max: f64,
    /// Controller computation times, seconds.
    pub d_ctrl_min: f64,
    pub d_ctrl_max: f64,
    /// Maximum number of successive packet dropouts.
    pub n_pd: u32,
    /// Sampling time, seconds.
    pub tau: f64,
}

impl NetworkParams {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let finite = [
            self.b_min,
            self.b_max,
            self.n_pc_plus,
            self.n_cp_plus,
            self.d_req_min,
            self.d_req_max,
            self.d_net_min,
            self.d_net_max,
            self.d_ctrl_min,
            self.d_ctrl_max,
            self.tau,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(NetworkError::Invalid("all parameters must be finite"));
        }
        if !(self.b_min > 0.0 && self.b_min <= self.b_max) {
            return Err(NetworkError::Invalid("condition 0 < B_min <= B_max"));
        }
        if !(self.n_pc_plus > -1.0 && self.n_cp_plus > -1.0) {
            return Err(NetworkError::Invalid("overheads must exceed -1"));
        }
        let pairs = [
            (self.d_req_min, self.d_req_max),
            (self.d_net_min, self.d_net_max),
            (self.d_ctrl_min, self.d_ctrl_max),
        ];
        if pairs.iter().any(|&(lo, hi)| !(lo >= 0.0 && lo <= hi)) {
            return Err(NetworkError::Invalid(
                "each delay bound must satisfy 0 <= min <= max",
            ));
        }
        if !(self.tau > 0.0) {
            return Err(NetworkError::Invalid("sampling time must be positive"));
        }
        Ok(())
    }
}

/// Bandwidth, aggregate and discrete delay bounds of one loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayBounds {
    pub bits_pc: u64,
    pub bits_cp: u64,
    pub d_b_pc_min: f64,
    pub d_b_pc_max: f64,
    pub d_b_cp_min: f64,
    pub d_b_cp_max: f64,
    /// Aggregate delays without dropouts.
    pub delta_bar_min: f64,
    pub delta_bar_max: f64,
    /// Dropout-adjusted delays.
    pub delta_min: f64,
    pub delta_max: f64,
    /// Discrete delay bounds, in sampling intervals.
    pub n_min: u32,
    pub n_max: u32,
}

impl DelayBounds {
    /// Bounds given directly as sampling intervals (continuous fields zeroed).
    pub fn discrete(n_min: u32, n_max: u32) -> Self {
        assert!(1 <= n_min && n_min <= n_max, "need 1 <= n_min <= n_max");
        DelayBounds {
            bits_pc: 0,
            bits_cp: 0,
            d_b_pc_min: 0.0,
            d_b_pc_max: 0.0,
            d_b_cp_min: 0.0,
            d_b_cp_max: 0.0,
            delta_bar_min: 0.0,
            delta_bar_max: 0.0,
            delta_min: 0.0,
            delta_max: 0.0,
            n_min,
            n_max,
        }
    }

    /// Admissible burst lengths, ascending.
    pub fn range(&self) -> core::ops::RangeInclusive<u32> {
        self.n_min..=self.n_max
    }
}

/// `ceil((1 + overhead) * ceil(log2 count))` bits.
pub fn message_bits(count: u128, overhead: f64) -> Result<u64, NetworkError> {
    if count == 0 {
        return Err(NetworkError::EmptySet);
    }
    let raw = ceil_log2(count);
    Ok(libm::ceil((1.0 + overhead) * raw as f64 - CEIL_NUDGE) as u64)
}

/// Exact `ceil(log2 n)` for `n >= 1`.
pub fn ceil_log2(n: u128) -> u32 {
    if n <= 1 {
        0
    } else {
        128 - (n - 1).leading_zeros()
    }
}

fn intervals(delay: f64, tau: f64) -> u32 {
    let n = libm::ceil(delay / tau - CEIL_NUDGE);
    (n as u32).max(1)
}

/// Delay bounds for messages encoding `n_states` quantized states and
/// `n_inputs` control values.
pub fn compute_delay_bounds(
    p: &NetworkParams,
    n_states: u128,
    n_inputs: u128,
) -> Result<DelayBounds, NetworkError> {
    p.validate()?;
    let bits_pc = message_bits(n_states, p.n_pc_plus)?;
    let bits_cp = message_bits(n_inputs, p.n_cp_plus)?;
    let d_b_pc_min = bits_pc as f64 / p.b_max;
    let d_b_pc_max = bits_pc as f64 / p.b_min;
    let d_b_cp_min = bits_cp as f64 / p.b_max;
    let d_b_cp_max = bits_cp as f64 / p.b_min;
    let delta_bar_min =
        d_b_pc_min + p.d_ctrl_min + d_b_cp_min + 2.0 * p.d_req_min + 2.0 * p.d_net_min;
    let delta_bar_max =
        d_b_pc_max + p.d_ctrl_max + d_b_cp_max + 2.0 * p.d_req_max + 2.0 * p.d_net_max;
    let delta_min = delta_bar_min;
    let delta_max = (1.0 + p.n_pd as f64) * delta_bar_max;
    Ok(DelayBounds {
        bits_pc,
        bits_cp,
        d_b_pc_min,
        d_b_pc_max,
        d_b_cp_min,
        d_b_cp_max,
        delta_bar_min,
        delta_bar_max,
        delta_min,
        delta_max,
        n_min: intervals(delta_min, p.tau),
        n_max: intervals(delta_max, p.tau),
    })
}

/// How iteration delays are drawn during simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DelayPolicy {
    Uniform { seed: u64 },
    Fixed(u32),
    Adversarial(Vec<u32>),
    WorstCase,
    BestCase,
}

/// Stateful delay source for one simulation.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    policy: DelayPolicy,
    rng: ChaCha8Rng,
    cursor: usize,
}

impl DelaySampler {
    pub fn new(policy: DelayPolicy) -> Self {
        let seed = match &policy {
            DelayPolicy::Uniform { seed } => *seed,
            _ => 0,
        };
        DelaySampler {
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: 0,
        }
    }

    pub fn policy(&self) -> &DelayPolicy {
        &self.policy
    }

    /// Draws the next iteration delay in `[n_min; n_max]`.
    pub fn sample(&mut self, bounds: &DelayBounds) -> Result<u32, NetworkError> {
        let check = |n: u32| {
            if n < bounds.n_min || n > bounds.n_max {
                Err(NetworkError::OutOfRange {
                    n,
                    n_min: bounds.n_min,
                    n_max: bounds.n_max,
                })
            } else {
                Ok(n)
            }
        };
        match &self.policy {
            DelayPolicy::Uniform { .. } => Ok(self.rng.gen_range(bounds.n_min..=bounds.n_max)),
            DelayPolicy::Fixed(n) => check(*n),
            DelayPolicy::WorstCase => Ok(bounds.n_max),
            DelayPolicy::BestCase => Ok(bounds.n_min),
            DelayPolicy::Adversarial(seq) => {
                let n = *seq
                    .get(self.cursor)
                    .ok_or(NetworkError::PolicyExhausted(self.cursor))?;
                self.cursor += 1;
                check(n)
            }
        }
    }
}

/// Convenience wrapper over [`DelaySampler::sample`].
pub fn sample_delay(bounds: &DelayBounds, sampler: &mut DelaySampler) -> Result<u32, NetworkError> {
    sampler.sample(bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn vehicle_params() -> NetworkParams {
        NetworkParams {
            b_min: 100.0,
            b_max: 1000.0,
            n_pc_plus: 0.2,
            n_cp_plus: 0.2,
            d_req_min: 0.05,
            d_req_max: 0.2,
            d_net_min: 0.1,
            d_net_max: 0.25,
            d_ctrl_min: 0.01,
            d_ctrl_max: 0.1,
            n_pd: 1,
            tau: 1.0,
        }
    }

    #[test]
    fn message_bits_examples() {
        assert_eq!(message_bits(2, 0.0).unwrap(), 1);
        assert_eq!(message_bits(66, 0.2).unwrap(), 9);
        assert_eq!(message_bits(201u128.pow(3), 0.2).unwrap(), 28);
        assert_eq!(message_bits(1, 0.0).unwrap(), 0);
        assert!(message_bits(0, 0.0).is_err());
    }

    #[test]
    fn ceil_log2_exact() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(66), 7);
        assert_eq!(ceil_log2(201u128.pow(3)), 23);
    }

    #[test]
    fn unit_bandwidth_example() {
        let p = NetworkParams {
            b_min: 1.0,
            b_max: 1.0,
            n_pc_plus: 0.0,
            n_cp_plus: 0.0,
            d_req_min: 0.0,
            d_req_max: 0.0,
            d_net_min: 0.0,
            d_net_max: 0.0,
            d_ctrl_min: 0.0,
            d_ctrl_max: 0.0,
            n_pd: 0,
            tau: 1.0,
        };
        let b = compute_delay_bounds(&p, 2, 2).unwrap();
        assert_eq!((b.delta_bar_min, b.delta_bar_max), (2.0, 2.0));
        assert_eq!((b.n_min, b.n_max), (2, 2));
    }

    #[test]
    fn vehicle_worksheet() {
        let b = compute_delay_bounds(&vehicle_params(), 201u128.pow(3), 66).unwrap();
        assert_eq!((b.bits_pc, b.bits_cp), (28, 9));
        assert!((b.delta_bar_min - 0.347).abs() < 1e-12);
        assert!((b.delta_bar_max - 1.37).abs() < 1e-12);
        assert!((b.delta_max - 2.74).abs() < 1e-12);
        assert_eq!((b.n_min, b.n_max), (1, 3));
    }

    #[test]
    fn ceiling_nudge_absorbs_representation_error() {
        assert_eq!(intervals(2.0000000000001, 1.0), 2);
        assert_eq!(intervals(2.001, 1.0), 3);
        assert_eq!(intervals(0.0, 1.0), 1);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = vehicle_params();
        p.b_min = 2000.0;
        assert!(compute_delay_bounds(&p, 2, 2).is_err());
        let mut p = vehicle_params();
        p.d_net_min = 0.5;
        assert!(compute_delay_bounds(&p, 2, 2).is_err());
        let mut p = vehicle_params();
        p.n_cp_plus = -1.0;
        assert!(compute_delay_bounds(&p, 2, 2).is_err());
    }

    #[test]
    fn policies() {
        let b = DelayBounds::discrete(1, 3);
        let mut s = DelaySampler::new(DelayPolicy::Fixed(2));
        assert!((0..10).all(|_| s.sample(&b).unwrap() == 2));
        let mut s = DelaySampler::new(DelayPolicy::WorstCase);
        assert!((0..10).all(|_| s.sample(&b).unwrap() == 3));
        let mut s = DelaySampler::new(DelayPolicy::BestCase);
        assert!((0..10).all(|_| s.sample(&b).unwrap() == 1));
        let mut s = DelaySampler::new(DelayPolicy::Adversarial(vec![3, 1]));
        assert_eq!(s.sample(&b).unwrap(), 3);
        assert_eq!(s.sample(&b).unwrap(), 1);
        assert_eq!(s.sample(&b), Err(NetworkError::PolicyExhausted(2)));
        let mut s = DelaySampler::new(DelayPolicy::Fixed(4));
        assert!(matches!(s.sample(&b), Err(NetworkError::OutOfRange { .. })));
    }

    #[test]
    fn uniform_frequencies() {
        let b = DelayBounds::discrete(1, 3);
        let mut s = DelaySampler::new(DelayPolicy::Uniform { seed: 7 });
        let mut hist = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws {
            hist[(s.sample(&b).unwrap() - 1) as usize] += 1;
        }
        for h in hist {
            assert!((h as f64 / draws as f64 - 1.0 / 3.0).abs() <= 0.02);
        }
        let mut a = DelaySampler::new(DelayPolicy::Uniform { seed: 11 });
        let mut c = DelaySampler::new(DelayPolicy::Uniform { seed: 11 });
        for _ in 0..100 {
            assert_eq!(a.sample(&b).unwrap(), c.sample(&b).unwrap());
        }
    }
}
