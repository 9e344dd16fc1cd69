//! The two-stream policy/value network, its action distribution and snapshots.

mod dist;
mod net;
mod snapshot;

use std::sync::{Arc, RwLock};

pub use dist::{
    entropy, log_prob_and_entropy, log_prob_entropy_grads, sample_action, ActionSample, SampleMode, ACCEL_MID,
    ACCEL_SCALE, STEER_SCALE,
};
pub use net::{backward, forward, DistParams, ForwardCache, HeadGrad, NetConfig, PolicyParams, HEAD_OUT, LOG_STD_MAX, LOG_STD_MIN};
pub use snapshot::{load_snapshot, save_snapshot, Snapshot, SnapshotMeta, FORMAT_VERSION, MAGIC};

use crate::dynamics::ControlInput;
use crate::error::Result;
use crate::observation::{ObservationFrame, ObservationSpec};
use crate::sim::PolicyDriver;

/// Network shape matching an observation layout, with default widths.
pub fn net_config_for(spec: &ObservationSpec) -> NetConfig {
    NetConfig { raster_px: spec.raster_px, vector_dim: spec.vector_dim(), ..NetConfig::default() }
}

/// Runs the network on an observation frame.
pub fn evaluate(params: &PolicyParams, obs: &ObservationFrame) -> Result<(DistParams, ForwardCache)> {
    forward(params, &obs.raster.to_unit(), &obs.vector)
}

/// Frozen parameters acting deterministically.
#[derive(Debug, Clone)]
pub struct FrozenPolicy {
    pub params: Arc<PolicyParams>,
}

impl PolicyDriver for FrozenPolicy {
    fn act(&self, obs: &ObservationFrame) -> Result<ControlInput> {
        let (d, _) = evaluate(&self.params, obs)?;
        // Deterministic mode draws nothing from the generator.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        Ok(sample_action(&d, &mut rng, SampleMode::Deterministic).control())
    }
}

/// Parameters that the trainer replaces between updates; every agent holding
/// a handle sees the latest version.
#[derive(Debug, Clone)]
pub struct LivePolicy {
    slot: Arc<RwLock<Arc<PolicyParams>>>,
}

impl LivePolicy {
    pub fn new(params: PolicyParams) -> Self {
        Self { slot: Arc::new(RwLock::new(Arc::new(params))) }
    }

    pub fn current(&self) -> Arc<PolicyParams> {
        self.slot.read().unwrap().clone()
    }

    pub fn replace(&self, params: PolicyParams) {
        *self.slot.write().unwrap() = Arc::new(params);
    }
}

impl PolicyDriver for LivePolicy {
    fn act(&self, obs: &ObservationFrame) -> Result<ControlInput> {
        FrozenPolicy { params: self.current() }.act(obs)
    }
}
