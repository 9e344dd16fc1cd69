//! Checks that train or benchmark: learning smoke, determinism, throughput
//! and the directional self-play comparison. These take seconds to hours and
//! are not part of [`run_all`](super::run_all).

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{EgoDriver, EvalSetup, Evaluator};
use crate::observation::ObservationSpec;
use crate::policy::{NetConfig, PolicyParams};
use crate::ppo::{emit_training_curve, UpdateMetrics, PpoConfig, PpoTrainer, VecEnv};
use crate::road::RoadMap;
use crate::selfplay::{run_selfplay, AgentZoo, PopulationSpec, Stage, StageSchedule, TrainSetup, INDEX_FILE};
use crate::sim::{AgentKind, EgoMode, EpisodeConfig, Population, World};

/// Small observation and network used wherever a check trains for real on
/// one core: a 32 px raster at 2 m/px and narrow layers.
pub fn compact_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.episode.observation = ObservationSpec { raster_px: 32, meters_per_pixel: 2.0, ..ObservationSpec::default() };
    c.net = NetConfig { channels: [4, 8, 8], raster_embed: 32, vec_hidden: 32, fusion: 32, ..c.net };
    c
}

// ---------------------------------------------------------------- learning smoke

/// Single-agent straight-road task: no traffic, no warm-up, 300-step cap,
/// and a 16 px raster.
pub fn smoke_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    let e = &mut c.episode;
    e.n_other_agents_max = 0;
    e.spawn_prob = 0.0;
    e.warmup_steps = 0;
    e.max_steps = 300;
    e.observation = ObservationSpec { raster_px: 16, meters_per_pixel: 4.0, ..ObservationSpec::default() };
    c.net = NetConfig { channels: [4, 8, 8], raster_embed: 32, vec_hidden: 32, fusion: 32, ..c.net };
    c.ppo = PpoConfig { n_envs: 4, horizon: 64, ..PpoConfig::default() };
    c
}

/// Episodes used to score a policy in the learning smoke test.
pub const SMOKE_EVAL_EPISODES: usize = 10;

fn mean_eval_return(map: &Arc<RoadMap>, episode: &EpisodeConfig, params: &PolicyParams, seed: u64) -> Result<f64> {
    let setup = EvalSetup { map: map.clone(), episode: episode.clone(), population: PopulationSpec::table_row(1)?, zoo: AgentZoo::in_memory() };
    let ego = EgoDriver::Policy { tag: "RL".into(), params: Arc::new(params.clone()) };
    Ok(Evaluator::new(&setup, ego)?.run(SMOKE_EVAL_EPISODES, seed)?.mean_return)
}

/// Trains `updates` PPO updates on the straight-road task and returns the
/// deterministic-policy mean return before and after.
pub fn learning_smoke(seed: u64, updates: u64) -> Result<(f64, f64)> {
    let cfg = smoke_config();
    cfg.validate()?;
    let map = Arc::new(RoadMap::straight_road());
    let params = PolicyParams::init(cfg.net_config(), &mut ChaCha8Rng::seed_from_u64(seed));
    let eval_seed = seed.wrapping_add(1_000);
    let before = mean_eval_return(&map, &cfg.episode, &params, eval_seed)?;
    let envs = (0..cfg.ppo.n_envs)
        .map(|_| World::new(map.clone(), cfg.episode.clone(), Population::idm_only(), EgoMode::External))
        .collect::<Result<Vec<_>>>()?;
    let mut venv = VecEnv::new(envs, seed);
    let mut trainer = PpoTrainer::new(cfg.ppo.clone(), params, seed)?;
    for _ in 0..updates {
        trainer.iterate(&mut venv)?;
    }
    let after = mean_eval_return(&map, &cfg.episode, &trainer.params, eval_seed)?;
    Ok((before, after))
}

// ---------------------------------------------------------------- determinism

/// Files produced by a training run, keyed by name relative to the run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

/// Runs the shipped three-stage schedule with `updates_per_stage` updates
/// and four environments into `dir`, then reads back the zoo and the
/// metrics CSV.
pub fn stub_schedule_artifacts(cfg: &TrainConfig, seed: u64, updates_per_stage: u64, dir: &Path) -> Result<RunArtifacts> {
    let schedule = StageSchedule::default_desk().with_updates(updates_per_stage);
    let setup = TrainSetup {
        map: Arc::new(RoadMap::zipper_merge()),
        episode: cfg.episode.clone(),
        ppo: PpoConfig { n_envs: 4, ..cfg.ppo.clone() },
        net: cfg.net_config(),
        seed,
    };
    let zoo_dir = dir.join("zoo");
    let mut zoo = AgentZoo::open(&zoo_dir)?;
    let run = run_selfplay(&schedule, &setup, &mut zoo, |_| {})?;
    let mut csv = Vec::new();
    emit_training_curve(&run.metrics, &mut csv)?;
    fs::write(dir.join("metrics.csv"), &csv)?;

    let mut files = vec![("metrics.csv".to_string(), csv)];
    let mut names: Vec<String> = fs::read_dir(&zoo_dir)?.map(|e| Ok(e?.file_name().to_string_lossy().into_owned())).collect::<Result<_>>()?;
    names.sort();
    debug_assert!(names.iter().any(|n| n == INDEX_FILE));
    for n in names {
        let bytes = fs::read(zoo_dir.join(&n))?;
        files.push((format!("zoo/{n}"), bytes));
    }
    Ok(RunArtifacts { files })
}

// ---------------------------------------------------------------- throughput

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub steps: u64,
    pub seconds: f64,
    /// Mean live agents per step, ego included.
    pub mean_agents: f64,
}

impl Throughput {
    pub fn steps_per_second(&self) -> f64 {
        self.steps as f64 / self.seconds
    }
}

/// Headless stepping of the zipper merge with up to ten rule-based agents,
/// building the ego's full observation every step. The ego is driven by the
/// rule-based model so episodes last; they restart when they end, and reset
/// time (warm-up included) counts against the budget.
pub fn throughput(steps: u64) -> Result<Throughput> {
    let episode = EpisodeConfig { n_other_agents_max: 10, spawn_prob: 0.5, ..EpisodeConfig::default() };
    let map = Arc::new(RoadMap::zipper_merge());
    let mut world = World::new(map, episode, Population::idm_only(), EgoMode::Idm)?;
    let mut seed = 0;
    let mut agents = 0usize;
    let t = Instant::now();
    world.reset(seed)?;
    for _ in 0..steps {
        let ego = world.ego().ok_or_else(|| Error::Config("world has no ego".into()))?.id;
        std::hint::black_box(world.observe(ego)?);
        agents += world.live_agents().count();
        if world.step(None)?.done {
            seed += 1;
            world.reset(seed)?;
        }
    }
    Ok(Throughput { steps, seconds: t.elapsed().as_secs_f64(), mean_agents: agents as f64 / steps.max(1) as f64 })
}

// ---------------------------------------------------------------- directional

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalResult {
    pub baseline_success: f64,
    pub trained_success: f64,
    pub trials: usize,
    pub updates: u64,
}

/// Reduced scene for the directional check: the compact observation and at
/// most five other agents.
pub fn directional_config() -> TrainConfig {
    let mut c = compact_config();
    c.episode.n_other_agents_max = 5;
    c
}

/// Measures the rule-based driver against the all-IDM population, trains a
/// stage-1 policy for `updates` updates, and measures it with the same
/// protocol and seed. Both run on the reduced merge map.
pub fn directional_selfplay(cfg: &TrainConfig, updates: u64, trials: usize, seed: u64, mut progress: impl FnMut(&UpdateMetrics)) -> Result<DirectionalResult> {
    cfg.validate()?;
    let map = Arc::new(RoadMap::reduced_merge());
    let eval_setup = EvalSetup { map: map.clone(), episode: cfg.episode.clone(), population: PopulationSpec::table_row(1)?, zoo: AgentZoo::in_memory() };
    let baseline = Evaluator::new(&eval_setup, EgoDriver::Idm)?.run(trials, seed)?;

    let schedule = StageSchedule::new(vec![Stage { tag: AgentKind::Rl, population: PopulationSpec::table_row(1)?, updates }])?;
    let setup = TrainSetup { map, episode: cfg.episode.clone(), ppo: cfg.ppo.clone(), net: cfg.net_config(), seed };
    let mut zoo = AgentZoo::in_memory();
    let run = run_selfplay(&schedule, &setup, &mut zoo, |ev| {
        if let crate::selfplay::TrainEvent::Update { metrics, .. } = ev {
            progress(metrics);
        }
    })?;
    let ego = EgoDriver::Policy { tag: "RL".into(), params: Arc::new(run.final_snapshot.params) };
    let trained = Evaluator::new(&eval_setup, ego)?.run(trials, seed)?;
    Ok(DirectionalResult { baseline_success: baseline.success_rate, trained_success: trained.success_rate, trials, updates })
}
