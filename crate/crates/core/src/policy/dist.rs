//! Action distribution: tanh-squashed Gaussians for steering and
//! acceleration, a categorical over the turn signal.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::net::{DistParams, HeadGrad};
use crate::dynamics::{ControlInput, Signal, ACCEL_MAX, ACCEL_MIN, STEER_BOUND};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `steer = STEER_SCALE · tanh(u)`.
pub const STEER_SCALE: f64 = STEER_BOUND;
/// `accel = ACCEL_MID + ACCEL_SCALE · tanh(u)`.
pub const ACCEL_MID: f64 = 0.5 * (ACCEL_MAX + ACCEL_MIN);
pub const ACCEL_SCALE: f64 = 0.5 * (ACCEL_MAX - ACCEL_MIN);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Explore,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub steer: f64,
    pub accel: f64,
    pub signal: Signal,
    /// Pre-squash Gaussian draws, kept so log-probabilities can be re-evaluated exactly.
    pub raw_steer: f64,
    pub raw_accel: f64,
    pub log_prob: f64,
    pub entropy: f64,
}

impl ActionSample {
    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.accel, self.steer, self.signal)
    }

    /// Rebuilds an action from squashed values, inverting the squash.
    pub fn from_control(c: &ControlInput) -> Self {
        let inv = |y: f64| y.clamp(-1.0 + 1e-12, 1.0 - 1e-12).atanh();
        Self {
            steer: c.steer,
            accel: c.accel,
            signal: c.signal,
            raw_steer: inv(c.steer / STEER_SCALE),
            raw_accel: inv((c.accel - ACCEL_MID) / ACCEL_SCALE),
            log_prob: f64::NAN,
            entropy: f64::NAN,
        }
    }
}

fn log_softmax(logits: &[f64; 3]) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    [logits[0] - lse, logits[1] - lse, logits[2] - lse]
}

/// log(d squash / du) for `scale · tanh(u)`, computed stably.
fn log_squash_jacobian(u: f64, scale: f64) -> f64 {
    // 1 − tanh²u = 4 / (e^u + e^−u)² ⇒ log = 2 (ln 2 − u − softplus(−2u)).
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    scale.ln() + 2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn gaussian_log_density(u: f64, mean: f64, log_std: f64) -> f64 {
    let z = (u - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - 0.5 * LN_2PI
}

fn gaussian_entropy(log_std: f64) -> f64 {
    0.5 * (1.0 + LN_2PI) + log_std
}

/// Entropy of the pre-squash Gaussians plus the categorical entropy.
pub fn entropy(d: &DistParams) -> f64 {
    let lp = log_softmax(&d.logits);
    let cat: f64 = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
    gaussian_entropy(d.steer_log_std) + gaussian_entropy(d.accel_log_std) + cat
}

pub fn sample_action<R: Rng + ?Sized>(d: &DistParams, rng: &mut R, mode: SampleMode) -> ActionSample {
    let (u_s, u_a, signal) = match mode {
        SampleMode::Deterministic => {
            let mut best = 0;
            for i in 1..3 {
                if d.logits[i] > d.logits[best] {
                    best = i;
                }
            }
            (d.steer_mean, d.accel_mean, Signal::from_index(best))
        }
        SampleMode::Explore => {
            let e1: f64 = StandardNormal.sample(rng);
            let e2: f64 = StandardNormal.sample(rng);
            let lp = log_softmax(&d.logits);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = 2;
            for (i, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    k = i;
                    break;
                }
            }
            (d.steer_mean + d.steer_log_std.exp() * e1, d.accel_mean + d.accel_log_std.exp() * e2, Signal::from_index(k))
        }
    };
    let mut a = ActionSample {
        steer: STEER_SCALE * u_s.tanh(),
        accel: ACCEL_MID + ACCEL_SCALE * u_a.tanh(),
        signal,
        raw_steer: u_s,
        raw_accel: u_a,
        log_prob: 0.0,
        entropy: 0.0,
    };
    let (lp, h) = log_prob_and_entropy(d, &a);
    a.log_prob = lp;
    a.entropy = h;
    a
}

/// Log-density of the squashed action (including the change-of-variables
/// term) times the signal probability, and the distribution entropy.
pub fn log_prob_and_entropy(d: &DistParams, a: &ActionSample) -> (f64, f64) {
    let lp_s = gaussian_log_density(a.raw_steer, d.steer_mean, d.steer_log_std) - log_squash_jacobian(a.raw_steer, STEER_SCALE);
    let lp_a = gaussian_log_density(a.raw_accel, d.accel_mean, d.accel_log_std) - log_squash_jacobian(a.raw_accel, ACCEL_SCALE);
    let lp_c = log_softmax(&d.logits)[a.signal.index()];
    (lp_s + lp_a + lp_c, entropy(d))
}

/// Gradients of log-probability and entropy with respect to the head outputs.
/// The value slot is zero in both.
pub fn log_prob_entropy_grads(d: &DistParams, a: &ActionSample) -> (HeadGrad, HeadGrad) {
    let mut glp = [0.0; 8];
    let mut gh = [0.0; 8];
    for (mi, si, u, mean, ls) in
        [(0, 1, a.raw_steer, d.steer_mean, d.steer_log_std), (2, 3, a.raw_accel, d.accel_mean, d.accel_log_std)]
    {
        let inv_var = (-2.0 * ls).exp();
        let diff = u - mean;
        glp[mi] = diff * inv_var;
        glp[si] = diff * diff * inv_var - 1.0;
        gh[si] = 1.0;
    }
    let lp = log_softmax(&d.logits);
    let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
    let h: f64 = -p.iter().zip(&lp).map(|(p, l)| p * l).sum::<f64>();
    for j in 0..3 {
        glp[4 + j] = if j == a.signal.index() { 1.0 } else { 0.0 } - p[j];
        gh[4 + j] = -p[j] * (lp[j] + h);
    }
    (glp, gh)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn dist() -> DistParams {
        DistParams {
            steer_mean: 0.2,
            steer_log_std: -0.7,
            accel_mean: -0.4,
            accel_log_std: 0.1,
            logits: [0.3, -1.0, 0.5],
            value: 0.0,
        }
    }

    #[test]
    fn deterministic_midpoint() {
        let d = DistParams { steer_mean: 0.0, steer_log_std: 0.0, accel_mean: 0.0, accel_log_std: 0.0, logits: [1.0, 0.0, 0.0], value: 0.0 };
        let a = sample_action(&d, &mut ChaCha8Rng::seed_from_u64(0), SampleMode::Deterministic);
        assert_eq!((a.steer, a.accel, a.signal), (0.0, -1.0, Signal::Off));
    }

    #[test]
    fn uniform_categorical_entropy() {
        let d = DistParams { steer_mean: 0.0, steer_log_std: 0.0, accel_mean: 0.0, accel_log_std: 0.0, logits: [0.0; 3], value: 0.0 };
        let g = 0.5 * (1.0 + LN_2PI);
        assert!((entropy(&d) - 2.0 * g - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn stored_log_prob_is_reproduced() {
        let d = dist();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = sample_action(&d, &mut rng, SampleMode::Explore);
            assert!(a.steer.abs() <= STEER_BOUND && (ACCEL_MIN..=ACCEL_MAX).contains(&a.accel));
            assert!((log_prob_and_entropy(&d, &a).0 - a.log_prob).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_actions_under_zero_mean() {
        let d = DistParams { steer_mean: 0.0, steer_log_std: -0.3, accel_mean: 0.0, accel_log_std: 0.2, logits: [0.0; 3], value: 0.0 };
        let mk = |u: f64| ActionSample { steer: 0.0, accel: 0.0, signal: Signal::Off, raw_steer: u, raw_accel: -u, log_prob: 0.0, entropy: 0.0 };
        assert!((log_prob_and_entropy(&d, &mk(0.7)).0 - log_prob_and_entropy(&d, &mk(-0.7)).0).abs() < 1e-12);
    }

    #[test]
    fn squash_jacobian_is_stable() {
        for u in [-40.0f64, -3.0, 0.0, 0.5, 25.0] {
            let direct = (STEER_SCALE * (1.0 - u.tanh().powi(2))).ln();
            let stable = log_squash_jacobian(u, STEER_SCALE);
            if direct.is_finite() {
                assert!((direct - stable).abs() < 1e-6, "{u}");
            }
            assert!(stable.is_finite());
        }
    }

    #[test]
    fn analytic_grads_match_differences() {
        let d = dist();
        let a = sample_action(&d, &mut ChaCha8Rng::seed_from_u64(11), SampleMode::Explore);
        let (glp, gh) = log_prob_entropy_grads(&d, &a);
        let as_arr = |d: &DistParams| [d.steer_mean, d.steer_log_std, d.accel_mean, d.accel_log_std, d.logits[0], d.logits[1], d.logits[2], d.value];
        let from_arr = |x: [f64; 8]| DistParams {
            steer_mean: x[0],
            steer_log_std: x[1],
            accel_mean: x[2],
            accel_log_std: x[3],
            logits: [x[4], x[5], x[6]],
            value: x[7],
        };
        let h = 1e-6;
        for i in 0..8 {
            let mut up = as_arr(&d);
            let mut dn = as_arr(&d);
            up[i] += h;
            dn[i] -= h;
            let (lu, hu) = log_prob_and_entropy(&from_arr(up), &a);
            let (ld, hd) = log_prob_and_entropy(&from_arr(dn), &a);
            assert!(((lu - ld) / (2.0 * h) - glp[i]).abs() < 1e-6, "lp {i}");
            assert!(((hu - hd) / (2.0 * h) - gh[i]).abs() < 1e-6, "h {i}");
        }
    }
}
