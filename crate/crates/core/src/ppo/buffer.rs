use crate::observation::ObservationFrame;
use crate::policy::ActionSample;
use crate::sim::Outcome;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: ObservationFrame,
    pub action: ActionSample,
    pub reward: f64,
    /// Value estimate at `obs` under the collecting parameters.
    pub value: f64,
    pub log_prob: f64,
    /// The episode ended on this step.
    pub done: bool,
    /// Per-environment episode counter.
    pub episode: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    pub env: usize,
    /// Step within the rollout window at which the episode ended.
    pub step: usize,
    pub ret: f64,
    pub length: u64,
    pub outcome: Option<Outcome>,
}

/// Trajectories of one collection phase, indexed by (env, t).
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub steps: Vec<Transition>,
    /// Value of the state after the last step of each env, zero if that step ended an episode.
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn with_capacity(n_envs: usize, horizon: usize) -> Self {
        Self { n_envs: 0, horizon, steps: Vec::with_capacity(n_envs * horizon), ..Default::default() }
    }

    pub(crate) fn push_env(&mut self, steps: Vec<Transition>, bootstrap: f64, episodes: Vec<EpisodeSummary>) {
        assert_eq!(steps.len(), self.horizon, "every env contributes exactly one horizon");
        self.steps.extend(steps);
        self.bootstrap.push(bootstrap);
        self.episodes.extend(episodes);
        self.n_envs += 1;
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn get(&self, env: usize, t: usize) -> &Transition {
        &self.steps[env * self.horizon + t]
    }

    /// Fills `advantages` and `returns` from rewards multiplied by
    /// `reward_scale`. Each env's sequence is treated separately; done flags
    /// stop bootstrapping across episodes.
    pub fn finish(&mut self, gamma: f64, lambda: f64, reward_scale: f64) {
        self.advantages.clear();
        self.returns.clear();
        for e in 0..self.n_envs {
            let seq = &self.steps[e * self.horizon..(e + 1) * self.horizon];
            let r: Vec<f64> = seq.iter().map(|s| s.reward * reward_scale).collect();
            let v: Vec<f64> = seq.iter().map(|s| s.value).collect();
            let d: Vec<bool> = seq.iter().map(|s| s.done).collect();
            let (a, ret) = compute_gae(&r, &v, &d, self.bootstrap[e], gamma, lambda);
            self.advantages.extend(a);
            self.returns.extend(ret);
        }
    }

    pub fn is_finished(&self) -> bool {
        !self.steps.is_empty() && self.advantages.len() == self.steps.len()
    }
}

/// Generalized advantage estimation over one aligned sequence.
///
/// `δₜ = rₜ + γ V(sₜ₊₁)(1 − doneₜ) − V(sₜ)`, `Aₜ = δₜ + γλ(1 − doneₜ) Aₜ₊₁`,
/// with `V(s_T) = bootstrap`. Returns are `A + V`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "GAE inputs must be aligned");
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to mean 0, standard deviation 1. Constant input only
/// has its mean removed.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
    for a in adv {
        *a = (*a - mean) * scale;
    }
}
