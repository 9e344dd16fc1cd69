//! Agent zoo and the staged self-play driver.

mod population;
mod schedule;
mod zoo;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use population::{KindSampler, PopulationSpec};
pub use schedule::{Stage, StageSchedule, DEFAULT_SCHEDULE};
pub use zoo::{AgentZoo, ZooEntry, INDEX_FILE};

use crate::error::{Error, Result, SnapshotError};
use crate::observation::{ObservationSpec, OBS_LAYOUT_VERSION};
use crate::policy::{FrozenPolicy, LivePolicy, NetConfig, PolicyParams, Snapshot, SnapshotMeta};
use crate::ppo::{PpoConfig, PpoTrainer, UpdateMetrics, VecEnv};
use crate::road::RoadMap;
use crate::sim::{AgentKind, EgoMode, EpisodeConfig, Population, PolicyDriver, World};

fn check_compatible(entry: &ZooEntry, spec: &ObservationSpec) -> Result<()> {
    if entry.layout_version != OBS_LAYOUT_VERSION {
        return Err(SnapshotError::LayoutVersion { found: entry.layout_version, expected: OBS_LAYOUT_VERSION }.into());
    }
    let c = &entry.snapshot.params.config;
    if c.raster_px != spec.raster_px || c.vector_dim != spec.vector_dim() {
        return Err(Error::Shape(format!(
            "{} snapshot expects {}px / {} inputs, observations are {}px / {}",
            entry.tag,
            c.raster_px,
            c.vector_dim,
            spec.raster_px,
            spec.vector_dim()
        )));
    }
    Ok(())
}

/// Resolves every policy kind in `spec` to a driver: `live` serves the
/// stage's own tag, the zoo serves the rest with frozen parameters.
pub fn build_population(
    spec: &PopulationSpec,
    zoo: &AgentZoo,
    live: Option<(AgentKind, &LivePolicy)>,
    obs: &ObservationSpec,
) -> Result<Population> {
    let mut drivers: BTreeMap<AgentKind, Arc<dyn PolicyDriver>> = BTreeMap::new();
    for kind in spec.active_kinds().filter(|k| k.is_policy()) {
        let driver: Arc<dyn PolicyDriver> = match live {
            Some((tag, lp)) if tag == kind => Arc::new(lp.clone()),
            _ => {
                let entry = zoo.get(kind).ok_or_else(|| Error::Config(format!("population uses {kind}, which is not in the zoo")))?;
                check_compatible(entry, obs)?;
                Arc::new(FrozenPolicy { params: Arc::new(entry.snapshot.params.clone()) })
            }
        };
        drivers.insert(kind, driver);
    }
    Ok(Population { sampler: KindSampler::new(spec), drivers })
}

/// Installs a population on a world; agents spawned from now on get
/// controllers for their sampled kind.
pub fn attach_policy_agents(world: &mut World, population: Population) {
    world.set_population(population);
}

/// Everything a self-play run needs besides the schedule.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub map: Arc<RoadMap>,
    pub episode: EpisodeConfig,
    pub ppo: PpoConfig,
    pub net: NetConfig,
    pub seed: u64,
}

impl TrainSetup {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.ppo.validate()?;
        self.net.validate()?;
        let o = &self.episode.observation;
        if self.net.raster_px != o.raster_px || self.net.vector_dim != o.vector_dim() {
            return Err(Error::Shape("network input sizes do not match the observation layout".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainEvent {
    StageStart { index: usize, tag: AgentKind, population: PopulationSpec, updates: u64 },
    Update { tag: AgentKind, metrics: UpdateMetrics },
    StageEnd { index: usize, tag: AgentKind, update_index: u64 },
}

#[derive(Debug, Clone)]
pub struct SelfPlayRun {
    pub final_snapshot: Snapshot,
    pub metrics: Vec<UpdateMetrics>,
}

/// Trains one policy through every stage of `schedule`, freezing it into
/// `zoo` at each stage boundary. The update counter, and with it penalty
/// annealing, runs across stages.
pub fn run_selfplay(
    schedule: &StageSchedule,
    setup: &TrainSetup,
    zoo: &mut AgentZoo,
    mut on_event: impl FnMut(&TrainEvent),
) -> Result<SelfPlayRun> {
    setup.validate()?;
    schedule.validate(&zoo.tags())?;
    let mut master = ChaCha8Rng::seed_from_u64(setup.seed);
    let init_seed: u64 = master.random();
    let env_seed: u64 = master.random();
    let opt_seed: u64 = master.random();

    let params = PolicyParams::init(setup.net, &mut ChaCha8Rng::seed_from_u64(init_seed));
    let live = LivePolicy::new(params.clone());
    let envs = (0..setup.ppo.n_envs)
        .map(|_| World::new(setup.map.clone(), setup.episode.clone(), Population::idm_only(), EgoMode::External))
        .collect::<Result<Vec<_>>>()?;
    let mut venv = VecEnv::new(envs, env_seed);
    let mut trainer = PpoTrainer::new(setup.ppo.clone(), params, opt_seed)?;
    let mut metrics = Vec::new();
    let mut last = None;

    for (index, stage) in schedule.stages.iter().enumerate() {
        let population = build_population(&stage.population, zoo, Some((stage.tag, &live)), &setup.episode.observation)?;
        for w in venv.envs_mut() {
            attach_policy_agents(w, population.clone());
        }
        venv.mark_for_reset();
        on_event(&TrainEvent::StageStart { index, tag: stage.tag, population: stage.population.clone(), updates: stage.updates });
        for _ in 0..stage.updates {
            let m = trainer.iterate(&mut venv)?;
            live.replace(trainer.params.clone());
            on_event(&TrainEvent::Update { tag: stage.tag, metrics: m });
            metrics.push(m);
        }
        let snap = Snapshot {
            meta: SnapshotMeta { tag: stage.tag.tag().to_string(), update_count: trainer.update_index, seed: setup.seed, ..Default::default() },
            params: trainer.params.clone(),
        };
        zoo.register(stage.tag, snap.clone())?;
        on_event(&TrainEvent::StageEnd { index, tag: stage.tag, update_index: trainer.update_index });
        last = Some(snap);
    }
    Ok(SelfPlayRun { final_snapshot: last.expect("schedule has at least one stage"), metrics })
}
