//! PPO training loop: rollout layout, curve accounting, update direction.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zipmerge::dynamics::ControlInput;
use zipmerge::observation::ObservationFrame;
use zipmerge::policy::{evaluate, log_prob_and_entropy, sample_action, DistParams, NetConfig, PolicyParams, SampleMode};
use zipmerge::ppo::{collect_rollouts, emit_training_curve, read_training_curve, EnvStep, Environment, PpoConfig, PpoTrainer, VecEnv, CURVE_HEADER};
use zipmerge::road::RoadMap;
use zipmerge::selftest::{compact_config, random_frame};
use zipmerge::sim::{EgoMode, Population, World};
use zipmerge::Result;

/// One-step task paying `sign · accel`.
struct Bandit {
    frame: ObservationFrame,
    sign: f64,
}

impl Environment for Bandit {
    fn reset(&mut self, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn observe(&self) -> Result<ObservationFrame> {
        Ok(self.frame.clone())
    }

    fn step(&mut self, action: ControlInput) -> Result<EnvStep> {
        Ok(EnvStep { reward: self.sign * action.accel, done: true, outcome: None })
    }
}

fn bandit_mean_accel(sign: f64) -> (f64, f64) {
    let cfg = NetConfig::micro();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let frame = random_frame(&cfg, &mut rng);
    let params = PolicyParams::init(cfg, &mut rng);
    let before = evaluate(&params, &frame).unwrap().0.accel_mean;
    let envs = (0..4).map(|_| Bandit { frame: frame.clone(), sign }).collect();
    let mut venv = VecEnv::new(envs, 2);
    let ppo = PpoConfig { n_envs: 4, horizon: 16, batch_size: 16, lr: 0.01, ..PpoConfig::default() };
    let mut tr = PpoTrainer::new(ppo, params, 3).unwrap();
    for _ in 0..20 {
        tr.iterate(&mut venv).unwrap();
    }
    (before, evaluate(&tr.params, &frame).unwrap().0.accel_mean)
}

#[test]
fn updates_move_the_policy_toward_reward() {
    let (b, a) = bandit_mean_accel(1.0);
    assert!(a > b + 0.1, "rewarding acceleration: mean {b} -> {a}");
    let (b, a) = bandit_mean_accel(-1.0);
    assert!(a < b - 0.1, "penalising acceleration: mean {b} -> {a}");
}

#[test]
fn zero_advantages_without_value_or_entropy_terms_change_nothing() {
    let cfg = NetConfig::micro();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let frame = random_frame(&cfg, &mut rng);
    let mut params = PolicyParams::init(cfg, &mut rng);
    params.quantize();
    // Every reward is zero and the value head starts at zero, so all
    // advantages vanish.
    let envs = (0..2).map(|_| Bandit { frame: frame.clone(), sign: 0.0 }).collect();
    let mut venv = VecEnv::new(envs, 4);
    let ppo = PpoConfig { n_envs: 2, horizon: 8, batch_size: 4, value_coef: 0.0, entropy_coef: 0.0, ..PpoConfig::default() };
    let mut tr = PpoTrainer::new(ppo, params.clone(), 5).unwrap();
    tr.iterate(&mut venv).unwrap();
    assert_eq!(tr.params, params);
}

fn compact_venv(n: usize, seed: u64) -> VecEnv<World> {
    let cfg = compact_config();
    let map = Arc::new(RoadMap::zipper_merge());
    let envs = (0..n).map(|_| World::new(map.clone(), cfg.episode.clone(), Population::idm_only(), EgoMode::External).unwrap()).collect();
    VecEnv::new(envs, seed)
}

#[test]
fn rollouts_are_laid_out_by_env_and_reproducible() {
    let params = PolicyParams::init(compact_config().net_config(), &mut ChaCha8Rng::seed_from_u64(1));
    let a = collect_rollouts(&mut compact_venv(3, 8), &params, 40).unwrap();
    let b = collect_rollouts(&mut compact_venv(3, 8), &params, 40).unwrap();
    assert_eq!((a.len(), a.n_envs, a.horizon), (120, 3, 40));
    assert_eq!(a.bootstrap.len(), 3);
    for (x, y) in a.steps.iter().zip(&b.steps) {
        assert_eq!(x.action, y.action);
        assert_eq!(x.obs, y.obs);
        assert_eq!((x.reward, x.done, x.value), (y.reward, y.done, y.value));
    }
    // Stored log-probabilities are reproduced from the stored observation.
    for t in a.steps.iter().step_by(17) {
        let (d, _) = evaluate(&params, &t.obs).unwrap();
        assert!((log_prob_and_entropy(&d, &t.action).0 - t.log_prob).abs() < 1e-9);
    }
}

#[test]
fn curve_has_one_row_per_update_and_counts_1024_steps_each() {
    let cfg = compact_config();
    let ppo = PpoConfig { epochs: 1, ..PpoConfig::default() };
    assert_eq!(ppo.steps_per_update(), 1024);
    let params = PolicyParams::init(cfg.net_config(), &mut ChaCha8Rng::seed_from_u64(2));
    let mut venv = compact_venv(ppo.n_envs, 3);
    let mut tr = PpoTrainer::new(ppo, params, 4).unwrap();
    let rows: Vec<_> = (0..3).map(|_| tr.iterate(&mut venv).unwrap()).collect();
    let mut csv = Vec::new();
    emit_training_curve(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    assert_eq!(text.lines().next(), Some(CURVE_HEADER));
    assert_eq!(text.lines().count(), 4);
    let back = read_training_curve(&csv[..]).unwrap();
    assert_eq!(back, rows);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.update, i as u64);
        assert_eq!(r.env_steps, 1024 * (i as u64 + 1));
    }
}

/// Probability mass of a (steer, accel) cell for one signal, by midpoint quadrature of the density.
fn cell_mass(d: &DistParams, signal: zipmerge::dynamics::Signal, s: (f64, f64), a: (f64, f64), sub: usize) -> f64 {
    let (ds, da) = ((s.1 - s.0) / sub as f64, (a.1 - a.0) / sub as f64);
    let mut m = 0.0;
    for i in 0..sub {
        for j in 0..sub {
            let c = ControlInput::new(a.0 + (j as f64 + 0.5) * da, s.0 + (i as f64 + 0.5) * ds, signal);
            let act = zipmerge::policy::ActionSample::from_control(&c);
            m += log_prob_and_entropy(d, &act).0.exp() * ds * da;
        }
    }
    m
}

#[test]
fn sampled_actions_follow_the_stated_density() {
    use zipmerge::dynamics::Signal;
    let d = DistParams { steer_mean: 0.3, steer_log_std: -0.7, accel_mean: -0.2, accel_log_std: -0.4, logits: [0.2, -0.5, 0.1], value: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 200_000;
    let bins = 8;
    let (s_lo, s_hi, a_lo, a_hi) = (-0.5, 0.5, -6.0, 4.0);
    let mut hist = vec![0usize; bins * bins * 3];
    let sig_index = |s: Signal| match s {
        Signal::Off => 0,
        Signal::Left => 1,
        Signal::Right => 2,
    };
    for _ in 0..n {
        let x = sample_action(&d, &mut rng, SampleMode::Explore);
        let i = (((x.steer - s_lo) / (s_hi - s_lo) * bins as f64) as usize).min(bins - 1);
        let j = (((x.accel - a_lo) / (a_hi - a_lo) * bins as f64) as usize).min(bins - 1);
        hist[(sig_index(x.signal) * bins + i) * bins + j] += 1;
    }
    let mut worst: f64 = 0.0;
    for sig in [Signal::Off, Signal::Left, Signal::Right] {
        for i in 0..bins {
            for j in 0..bins {
                let s = (s_lo + i as f64 * (s_hi - s_lo) / bins as f64, s_lo + (i + 1) as f64 * (s_hi - s_lo) / bins as f64);
                let a = (a_lo + j as f64 * (a_hi - a_lo) / bins as f64, a_lo + (j + 1) as f64 * (a_hi - a_lo) / bins as f64);
                let p = cell_mass(&d, sig, s, a, 24);
                let observed = hist[(sig_index(sig) * bins + i) * bins + j] as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-4);
                worst = worst.max((observed - p).abs() / se);
            }
        }
    }
    assert!(worst < 5.0, "worst cell deviation {worst:.2} standard errors");
}
