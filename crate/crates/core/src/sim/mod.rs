//! Episode lifecycle: spawning, synchronous stepping, events, rewards and termination.

mod collision;
mod reward;
mod trace;
mod traffic;
mod world;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use collision::{intersecting_pairs, OrientedBox};
pub use reward::{anneal_penalties, compute_reward, RewardConfig, RewardInputs, RewardLedger, StepEvents};
pub use trace::{read_trace, write_trace, TraceRow};
pub use traffic::{build_corridors, ChangeCorridor};
pub use world::{
    check_termination, detect_collisions, AgentRecord, Controller, EgoMode, StepOutcome, StepReport, World,
};

use crate::dynamics::{ControlInput, ControlLimits, VehicleGeometry, DT};
use crate::error::{Error, Result};
use crate::idm::IdmSampling;
use crate::observation::{ObservationFrame, ObservationSpec};
use crate::selfplay::KindSampler;

pub type AgentId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    Idm,
    Rl,
    Sp1,
    Sp2,
    EgoLearner,
}

impl AgentKind {
    /// Kinds that may appear in a sparring population.
    pub const POPULATION: [AgentKind; 4] = [AgentKind::Idm, AgentKind::Rl, AgentKind::Sp1, AgentKind::Sp2];

    pub fn tag(self) -> &'static str {
        match self {
            AgentKind::Idm => "IDM",
            AgentKind::Rl => "RL",
            AgentKind::Sp1 => "SP1",
            AgentKind::Sp2 => "SP2",
            AgentKind::EgoLearner => "EGO",
        }
    }

    pub fn is_policy(self) -> bool {
        matches!(self, AgentKind::Rl | AgentKind::Sp1 | AgentKind::Sp2)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AgentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IDM" => Ok(AgentKind::Idm),
            "RL" => Ok(AgentKind::Rl),
            "SP1" => Ok(AgentKind::Sp1),
            "SP2" => Ok(AgentKind::Sp2),
            "EGO" => Ok(AgentKind::EgoLearner),
            _ => Err(Error::Config(format!("unknown agent kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Collision,
    OutOfBounds,
    Timeout,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Success, Outcome::Collision, Outcome::OutOfBounds, Outcome::Timeout];

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::OutOfBounds => "oob",
            Outcome::Timeout => "timeout",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

/// Something that turns an agent's own observation into controls.
pub trait PolicyDriver: Send + Sync {
    fn act(&self, obs: &ObservationFrame) -> Result<ControlInput>;
}

/// Sparring population: which kinds spawn, and who drives the policy kinds.
#[derive(Clone)]
pub struct Population {
    pub sampler: KindSampler,
    pub drivers: BTreeMap<AgentKind, Arc<dyn PolicyDriver>>,
}

impl Population {
    pub fn idm_only() -> Self {
        Self { sampler: KindSampler::idm_only(), drivers: BTreeMap::new() }
    }
}

impl fmt::Debug for Population {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Population")
            .field("sampler", &self.sampler)
            .field("drivers", &self.drivers.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Upper bound on simultaneously live non-ego agents.
pub const MAX_OTHER_AGENTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// Nominal scene size, m. Informational.
    pub scale: f64,
    pub init_vel_min: f64,
    pub init_vel_max: f64,
    pub n_other_agents_max: usize,
    pub spawn_prob: f64,
    /// Spawn footprint inflation used for the occupancy check, m.
    pub spawn_clearance: f64,
    pub max_steps: u64,
    /// Sparring-only steps simulated before the ego enters.
    pub warmup_steps: u64,
    pub success_radius: f64,
    pub dt: f64,
    pub reward: RewardConfig,
    pub limits: ControlLimits,
    pub geometry: VehicleGeometry,
    pub idm: IdmSampling,
    pub observation: ObservationSpec,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            scale: 340.0,
            init_vel_min: 0.0,
            init_vel_max: 5.0,
            n_other_agents_max: 10,
            spawn_prob: 0.01,
            spawn_clearance: 1.0,
            max_steps: 1000,
            warmup_steps: 150,
            success_radius: 5.0,
            dt: DT,
            reward: RewardConfig::default(),
            limits: ControlLimits::default(),
            geometry: VehicleGeometry::default(),
            idm: IdmSampling::default(),
            observation: ObservationSpec::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return bad("spawn_prob must lie in [0, 1]");
        }
        if !(self.init_vel_min >= 0.0 && self.init_vel_min <= self.init_vel_max) {
            return bad("init velocity range must be ordered and non-negative");
        }
        if self.n_other_agents_max > MAX_OTHER_AGENTS {
            return Err(Error::Config(format!("n_other_agents_max may be at most {MAX_OTHER_AGENTS}")));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.idm.v0_min > self.idm.v0_max {
            return bad("IDM desired-speed range must be ordered");
        }
        if !(self.success_radius >= 0.0) {
            return bad("success_radius must be non-negative");
        }
        self.observation.validate()
    }
}
