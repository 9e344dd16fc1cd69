//! Itemized per-step reward.

use crate::dynamics::Signal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub success: f64,
    pub collision_final: f64,
    pub oob_final: f64,
    /// Both terminal penalties start here and move linearly to their final values.
    pub penalty_start: f64,
    pub anneal_updates: u64,
    pub velocity_scale: f64,
    pub velocity_cap: f64,
    pub signal_penalty: f64,
    pub center_penalty_per_m: f64,
    pub steer_smooth_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            success: 100.0,
            collision_final: -500.0,
            oob_final: -250.0,
            penalty_start: -100.0,
            anneal_updates: 1000,
            velocity_scale: 0.1,
            velocity_cap: 15.0,
            signal_penalty: -0.1,
            center_penalty_per_m: -0.1,
            steer_smooth_penalty: -2.0,
        }
    }
}

/// Collision and out-of-bounds penalties after `update_index` parameter updates.
pub fn anneal_penalties(update_index: u64, cfg: &RewardConfig) -> (f64, f64) {
    let frac = if cfg.anneal_updates == 0 {
        1.0
    } else {
        (update_index as f64 / cfg.anneal_updates as f64).min(1.0)
    };
    let lerp = |end: f64| cfg.penalty_start + (end - cfg.penalty_start) * frac;
    (lerp(cfg.collision_final), lerp(cfg.oob_final))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepEvents {
    pub success: bool,
    pub collision: bool,
    pub oob: bool,
}

/// The per-step quantities the shaping terms depend on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardInputs {
    pub speed: f64,
    pub signal: Signal,
    /// Distance from the nearest lane centerline, m.
    pub center_offset: f64,
    pub steer: f64,
    pub prev_steer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardLedger {
    pub success: f64,
    pub collision: f64,
    pub oob: f64,
    pub velocity: f64,
    pub signal: f64,
    pub center_offset: f64,
    pub steer_smooth: f64,
}

impl RewardLedger {
    pub const COMPONENTS: [&'static str; 7] =
        ["success", "collision", "oob", "velocity", "signal", "center_offset", "steer_smooth"];

    pub fn components(&self) -> [f64; 7] {
        [self.success, self.collision, self.oob, self.velocity, self.signal, self.center_offset, self.steer_smooth]
    }

    /// Sum of the components, always recomputed from them.
    pub fn total(&self) -> f64 {
        self.components().iter().sum()
    }

    pub fn accumulate(&mut self, other: &RewardLedger) {
        self.success += other.success;
        self.collision += other.collision;
        self.oob += other.oob;
        self.velocity += other.velocity;
        self.signal += other.signal;
        self.center_offset += other.center_offset;
        self.steer_smooth += other.steer_smooth;
    }
}

pub fn compute_reward(inputs: &RewardInputs, events: &StepEvents, cfg: &RewardConfig, update_index: u64) -> RewardLedger {
    let (collision_pen, oob_pen) = anneal_penalties(update_index, cfg);
    RewardLedger {
        success: if events.success { cfg.success } else { 0.0 },
        collision: if events.collision { collision_pen } else { 0.0 },
        oob: if events.oob { oob_pen } else { 0.0 },
        velocity: cfg.velocity_scale * inputs.speed.min(cfg.velocity_cap),
        signal: if inputs.signal != Signal::Off { cfg.signal_penalty } else { 0.0 },
        center_offset: cfg.center_penalty_per_m * inputs.center_offset.abs(),
        steer_smooth: cfg.steer_smooth_penalty * (inputs.steer - inputs.prev_steer).abs(),
    }
}
