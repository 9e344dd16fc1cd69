use rayon::prelude::*;

use super::PpoConfig;
use crate::error::{Error, Result};
use crate::observation::ObservationFrame;
use crate::policy::{backward, evaluate, log_prob_and_entropy, log_prob_entropy_grads, ActionSample, PolicyParams};

/// Minibatches are split into this many contiguous chunks whose gradients
/// are summed in chunk order, so the result is independent of thread count.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone, Copy)]
pub struct LossItem<'a> {
    pub obs: &'a ObservationFrame,
    pub action: &'a ActionSample,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of items whose clipped branch was active.
    pub clip_fraction: f64,
    pub grads: Vec<f64>,
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)` and its derivative in `r`. Whenever the
/// clipped branch is strictly smaller it is the active one and the ratio
/// receives no gradient.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    if clipped < unclipped {
        (clipped, 0.0)
    } else {
        (unclipped, advantage)
    }
}

struct Partial {
    policy: f64,
    value: f64,
    entropy: f64,
    clipped: usize,
    grads: Vec<f64>,
}

fn chunk_loss(params: &PolicyParams, items: &[LossItem], cfg: &PpoConfig, scale: f64) -> Result<Partial> {
    let mut p = Partial { policy: 0.0, value: 0.0, entropy: 0.0, clipped: 0, grads: vec![0.0; params.len()] };
    for it in items {
        let (d, cache) = evaluate(params, it.obs)?;
        let (lp, h) = log_prob_and_entropy(&d, it.action);
        let ratio = (lp - it.old_log_prob).exp();
        let (surr, dsurr_dr) = clipped_surrogate(ratio, it.advantage, cfg.clip_eps);
        if dsurr_dr == 0.0 && it.advantage != 0.0 {
            p.clipped += 1;
        }
        let verr = d.value - it.ret;
        p.policy -= surr;
        p.value += verr * verr;
        p.entropy += h;

        let (glp, gh) = log_prob_entropy_grads(&d, it.action);
        // d(−surr)/d lp = −dsurr/dr · r
        let k_lp = -dsurr_dr * ratio;
        let mut head = [0.0; crate::policy::HEAD_OUT];
        for j in 0..head.len() {
            head[j] = scale * (k_lp * glp[j] - cfg.entropy_coef * gh[j]);
        }
        head[7] += scale * cfg.value_coef * 2.0 * verr;
        backward(params, &cache, &head, &mut p.grads);
    }
    Ok(p)
}

/// Clipped-surrogate loss over a minibatch, averaged, with its exact gradient:
/// `−mean(min(rA, clip(r)A)) + c_v·mean((V − R)²) − c_H·mean(H)`.
pub fn ppo_loss(params: &PolicyParams, items: &[LossItem], cfg: &PpoConfig) -> Result<LossReport> {
    if items.is_empty() {
        return Err(Error::Config("empty minibatch".into()));
    }
    let n = items.len();
    let scale = 1.0 / n as f64;
    let chunk = n.div_ceil(GRAD_CHUNKS);
    let parts: Vec<Result<Partial>> = items.par_chunks(chunk).map(|c| chunk_loss(params, c, cfg, scale)).collect();
    let mut grads = vec![0.0; params.len()];
    let (mut pol, mut val, mut ent, mut clipped) = (0.0, 0.0, 0.0, 0);
    for part in parts {
        let part = part?;
        pol += part.policy;
        val += part.value;
        ent += part.entropy;
        clipped += part.clipped;
        for (g, x) in grads.iter_mut().zip(&part.grads) {
            *g += x;
        }
    }
    let policy_loss = pol * scale;
    let value_loss = val * scale;
    let entropy = ent * scale;
    let loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
    Ok(LossReport { loss, policy_loss, value_loss, entropy, clip_fraction: clipped as f64 * scale, grads })
}

/// Scales `grads` so its Euclidean norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= k;
        }
    }
    norm
}
