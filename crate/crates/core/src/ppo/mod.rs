//! Clipped-surrogate PPO: rollouts, GAE, minibatch momentum SGD.

mod buffer;
mod env;
mod loss;
mod metrics;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use buffer::{compute_gae, normalize_advantages, EpisodeSummary, RolloutBuffer, Transition};
pub use env::{collect_rollouts, EnvStep, Environment, VecEnv};
pub use loss::{clip_grad_norm, clipped_surrogate, ppo_loss, LossItem, LossReport};
pub use metrics::{emit_training_curve, read_training_curve, write_curve_row, UpdateMetrics, CURVE_HEADER};

use crate::error::{Error, Result};
use crate::policy::PolicyParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    /// Steps per environment per update. The default 32 × 32 envs gives
    /// 1024 environment steps between updates.
    pub horizon: usize,
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub value_coef: f64,
    pub n_envs: usize,
    pub max_grad_norm: f64,
    pub momentum: f64,
    /// Multiplies rewards before advantage estimation so value targets stay
    /// near unit scale. Advantages are normalized, so this only affects the
    /// value loss.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr: 0.0025,
            entropy_coef: 0.001,
            horizon: 32,
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            value_coef: 0.5,
            n_envs: 32,
            max_grad_norm: 0.5,
            momentum: 0.9,
            reward_scale: 0.01,
        }
    }
}

impl PpoConfig {
    pub fn steps_per_update(&self) -> usize {
        self.horizon * self.n_envs
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.horizon == 0 || self.n_envs == 0 {
            return bad("batch_size, horizon and n_envs must be positive");
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward_scale must be positive");
        }
        if !(self.lr >= 0.0) || !(self.max_grad_norm > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("lr must be non-negative, max_grad_norm positive, momentum in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean pre-clip gradient norm over minibatches.
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

/// Owns the learner parameters and optimizer state.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub config: PpoConfig,
    pub params: PolicyParams,
    velocity: Vec<f64>,
    /// Completed parameter updates; drives penalty annealing.
    pub update_index: u64,
    pub env_steps: u64,
    rng: ChaCha8Rng,
}

impl PpoTrainer {
    pub fn new(config: PpoConfig, params: PolicyParams, seed: u64) -> Result<Self> {
        config.validate()?;
        let velocity = vec![0.0; params.len()];
        Ok(Self { config, params, velocity, update_index: 0, env_steps: 0, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    /// Runs `epochs` passes of shuffled minibatches over a finished buffer.
    pub fn update(&mut self, buffer: &RolloutBuffer) -> Result<UpdateStats> {
        if !buffer.is_finished() {
            return Err(Error::Config("buffer has no advantages; call finish first".into()));
        }
        let cfg = self.config.clone();
        let mut adv = buffer.advantages.clone();
        normalize_advantages(&mut adv);
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        let mut stats = UpdateStats::default();
        let mut batches = 0usize;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
                let items: Vec<LossItem> = idx
                    .iter()
                    .map(|&i| {
                        let s = &buffer.steps[i];
                        LossItem { obs: &s.obs, action: &s.action, old_log_prob: s.log_prob, advantage: adv[i], ret: buffer.returns[i] }
                    })
                    .collect();
                let mut rep = ppo_loss(&self.params, &items, &cfg)?;
                if !rep.loss.is_finite() || rep.grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "update {} epoch {epoch} minibatch {b}: loss {} (policy {}, value {}, entropy {})",
                        self.update_index, rep.loss, rep.policy_loss, rep.value_loss, rep.entropy
                    )));
                }
                let norm = clip_grad_norm(&mut rep.grads, cfg.max_grad_norm);
                for ((p, v), g) in self.params.data.iter_mut().zip(&mut self.velocity).zip(&rep.grads) {
                    *v = cfg.momentum * *v + g;
                    *p -= cfg.lr * *v;
                }
                stats.policy_loss += rep.policy_loss;
                stats.value_loss += rep.value_loss;
                stats.entropy += rep.entropy;
                stats.grad_norm += norm;
                stats.clip_fraction += rep.clip_fraction;
                batches += 1;
            }
        }
        self.params.quantize();
        if !self.params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after update {}", self.update_index)));
        }
        self.update_index += 1;
        let k = 1.0 / batches.max(1) as f64;
        Ok(UpdateStats {
            policy_loss: stats.policy_loss * k,
            value_loss: stats.value_loss * k,
            entropy: stats.entropy * k,
            grad_norm: stats.grad_norm * k,
            clip_fraction: stats.clip_fraction * k,
        })
    }

    /// One collect → GAE → update cycle.
    pub fn iterate<E: Environment>(&mut self, venv: &mut VecEnv<E>) -> Result<UpdateMetrics> {
        venv.set_update_index(self.update_index);
        let mut buffer = collect_rollouts(venv, &self.params, self.config.horizon)?;
        buffer.finish(self.config.gamma, self.config.gae_lambda, self.config.reward_scale);
        self.env_steps += buffer.len() as u64;
        let update = self.update_index;
        let stats = self.update(&buffer)?;
        Ok(UpdateMetrics::from_rollout(update, self.env_steps, &buffer, &stats))
    }
}
