//! Evaluation protocol and replay export.

mod replay;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use replay::{export_replay, render_replay, ReplayStyle, COLLISION_COLOR};

use crate::error::{Error, Result};
use crate::policy::{FrozenPolicy, PolicyParams};
use crate::road::RoadMap;
use crate::selfplay::{build_population, AgentZoo, PopulationSpec};
use crate::sim::{EgoMode, EpisodeConfig, Outcome, Population, TraceRow, World};

/// Who drives the ego during evaluation.
#[derive(Debug, Clone)]
pub enum EgoDriver {
    /// The rule-based driver, for baselines.
    Idm,
    /// Network parameters, acting without exploration noise.
    Policy { tag: String, params: Arc<PolicyParams> },
}

impl EgoDriver {
    pub fn tag(&self) -> &str {
        match self {
            EgoDriver::Idm => "IDM",
            EgoDriver::Policy { tag, .. } => tag,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub map: Arc<RoadMap>,
    pub episode: EpisodeConfig,
    pub population: PopulationSpec,
    /// Source of the population's frozen policy kinds.
    pub zoo: AgentZoo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub trial: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub ret: f64,
    pub steps: u64,
}

/// Percent rates with binomial standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_trials: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub oob_rate: f64,
    pub timeout_rate: f64,
    pub success_se: f64,
    pub collision_se: f64,
    pub oob_se: f64,
    pub timeout_se: f64,
    pub mean_return: f64,
    pub population: String,
    pub policy: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
}

/// `√(p(1−p)/n)·100` for a rate given in percent.
pub fn standard_error(rate_percent: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = rate_percent / 100.0;
    (p * (1.0 - p) / n as f64).sqrt() * 100.0
}

impl EvalReport {
    pub fn from_episodes(episodes: Vec<EpisodeRecord>, policy: &str, population: &PopulationSpec, seed: u64) -> Self {
        let n = episodes.len();
        let rate = |o: Outcome| {
            if n == 0 {
                0.0
            } else {
                100.0 * episodes.iter().filter(|e| e.outcome == o).count() as f64 / n as f64
            }
        };
        let (s, c, b, t) = (rate(Outcome::Success), rate(Outcome::Collision), rate(Outcome::OutOfBounds), rate(Outcome::Timeout));
        let mean_return = if n == 0 { 0.0 } else { episodes.iter().map(|e| e.ret).sum::<f64>() / n as f64 };
        Self {
            n_trials: n,
            success_rate: s,
            collision_rate: c,
            oob_rate: b,
            timeout_rate: t,
            success_se: standard_error(s, n),
            collision_se: standard_error(c, n),
            oob_se: standard_error(b, n),
            timeout_se: standard_error(t, n),
            mean_return,
            population: population.to_string(),
            policy: policy.to_string(),
            seed,
            episodes,
        }
    }

    /// `trial,seed,outcome,return,steps` per episode.
    pub fn write_episode_log<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "trial,seed,outcome,return,steps")?;
        for e in &self.episodes {
            writeln!(sink, "{},{},{},{:?},{}", e.trial, e.seed, e.outcome.name(), e.ret, e.steps)?;
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "policy {} vs population {} ({} trials, seed {})", self.policy, self.population, self.n_trials, self.seed)?;
        for (name, r, se) in [
            ("success", self.success_rate, self.success_se),
            ("collision", self.collision_rate, self.collision_se),
            ("oob", self.oob_rate, self.oob_se),
            ("timeout", self.timeout_rate, self.timeout_se),
        ] {
            writeln!(f, "  {name:<10}{r:6.1}% ± {se:.1}")?;
        }
        write!(f, "  mean return {:.2}", self.mean_return)
    }
}

/// Seed of trial `i`; independent of evaluation order.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng.random()
}

/// Prepared evaluation: population drivers resolved once, shared by all trials.
pub struct Evaluator {
    map: Arc<RoadMap>,
    episode: EpisodeConfig,
    population: Population,
    spec: PopulationSpec,
    ego: EgoDriver,
}

impl Evaluator {
    pub fn new(setup: &EvalSetup, ego: EgoDriver) -> Result<Self> {
        setup.episode.validate()?;
        let obs = &setup.episode.observation;
        if let EgoDriver::Policy { params, tag } = &ego {
            let c = &params.config;
            if c.raster_px != obs.raster_px || c.vector_dim != obs.vector_dim() {
                return Err(Error::Shape(format!(
                    "policy {tag} expects {}px / {} inputs, observations are {}px / {}",
                    c.raster_px,
                    c.vector_dim,
                    obs.raster_px,
                    obs.vector_dim()
                )));
            }
        }
        let population = build_population(&setup.population, &setup.zoo, None, obs)?;
        Ok(Self { map: setup.map.clone(), episode: setup.episode.clone(), population, spec: setup.population.clone(), ego })
    }

    /// Runs one deterministic-ego episode from `seed`, optionally tracing it.
    pub fn run_trial(&self, trial: usize, seed: u64, trace: bool) -> Result<(EpisodeRecord, Vec<TraceRow>)> {
        let mode = match &self.ego {
            EgoDriver::Idm => EgoMode::Idm,
            EgoDriver::Policy { params, .. } => EgoMode::Policy(Arc::new(FrozenPolicy { params: params.clone() })),
        };
        let mut world = World::new(self.map.clone(), self.episode.clone(), self.population.clone(), mode)?;
        world.record_trace(trace);
        world.reset(seed)?;
        let mut ret = 0.0;
        loop {
            let rep = world.step(None)?;
            ret += rep.ego_reward.map(|r| r.total()).unwrap_or(0.0);
            if rep.done {
                let outcome = rep.ego_outcome.unwrap_or(Outcome::Timeout);
                let rec = EpisodeRecord { trial, seed, outcome, ret, steps: world.step_index() };
                return Ok((rec, world.trace().to_vec()));
            }
        }
    }

    /// `trials` independent episodes. Trials may run concurrently; results
    /// are assembled by trial index.
    pub fn run(&self, trials: usize, seed: u64) -> Result<EvalReport> {
        let episodes = (0..trials)
            .into_par_iter()
            .map(|i| self.run_trial(i, trial_seed(seed, i), false).map(|(r, _)| r))
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport::from_episodes(episodes, self.ego.tag(), &self.spec, seed))
    }
}

/// The evaluation protocol: `trials` seeded episodes, ego without exploration noise.
pub fn evaluate(setup: &EvalSetup, ego: EgoDriver, trials: usize, seed: u64) -> Result<EvalReport> {
    Evaluator::new(setup, ego)?.run(trials, seed)
}
