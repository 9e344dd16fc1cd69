//! Flat `key=value` run configuration with environment overrides.
//!
//! Every key maps to one field. `#` starts a comment. An environment
//! variable `ZIPMERGE_<KEY>` (dots become underscores, upper case) overrides
//! the file, e.g. `ZIPMERGE_PPO_LR=0.001`.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policy::{net_config_for, NetConfig};
use crate::ppo::PpoConfig;
use crate::sim::EpisodeConfig;

pub const ENV_PREFIX: &str = "ZIPMERGE_";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episode: EpisodeConfig,
    pub ppo: PpoConfig,
    /// Hidden widths; input sizes always follow the observation layout.
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let episode = EpisodeConfig::default();
        let net = net_config_for(&episode.observation);
        Self { episode, ppo: PpoConfig::default(), net }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| num(key, x)).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

// (key, field path) for every scalar setting.
macro_rules! scalar_keys {
    ($m:ident) => {
        $m! {
            "scale" => episode.scale,
            "init_vel_min" => episode.init_vel_min,
            "init_vel_max" => episode.init_vel_max,
            "n_other_agents_max" => episode.n_other_agents_max,
            "spawn_prob" => episode.spawn_prob,
            "spawn_clearance" => episode.spawn_clearance,
            "max_steps" => episode.max_steps,
            "warmup_steps" => episode.warmup_steps,
            "success_radius" => episode.success_radius,
            "dt" => episode.dt,
            "reward.success" => episode.reward.success,
            "reward.collision_final" => episode.reward.collision_final,
            "reward.oob_final" => episode.reward.oob_final,
            "reward.penalty_start" => episode.reward.penalty_start,
            "reward.anneal_updates" => episode.reward.anneal_updates,
            "reward.velocity_scale" => episode.reward.velocity_scale,
            "reward.velocity_cap" => episode.reward.velocity_cap,
            "reward.signal_penalty" => episode.reward.signal_penalty,
            "reward.center_penalty_per_m" => episode.reward.center_penalty_per_m,
            "reward.steer_smooth_penalty" => episode.reward.steer_smooth_penalty,
            "limits.accel_min" => episode.limits.accel_min,
            "limits.accel_max" => episode.limits.accel_max,
            "limits.steer_bound" => episode.limits.steer_bound,
            "vehicle.l_f" => episode.geometry.l_f,
            "vehicle.l_r" => episode.geometry.l_r,
            "vehicle.length" => episode.geometry.length,
            "vehicle.width" => episode.geometry.width,
            "idm.v0_min" => episode.idm.v0_min,
            "idm.v0_max" => episode.idm.v0_max,
            "idm.jitter" => episode.idm.jitter,
            "idm.time_headway" => episode.idm.base.time_headway,
            "idm.a_max" => episode.idm.base.a_max,
            "idm.b_comf" => episode.idm.base.b_comf,
            "idm.s0" => episode.idm.base.s0,
            "idm.delta_exp" => episode.idm.base.delta_exp,
            "idm.gap_lead_min" => episode.idm.base.gap_lead_min,
            "idm.gap_lag_min" => episode.idm.base.gap_lag_min,
            "idm.signal_lead_time" => episode.idm.base.signal_lead_time,
            "obs.raster_px" => episode.observation.raster_px,
            "obs.meters_per_pixel" => episode.observation.meters_per_pixel,
            "obs.neighbor_slots" => episode.observation.neighbor_slots,
            "obs.position_scale" => episode.observation.position_scale,
            "obs.speed_scale" => episode.observation.speed_scale,
            "obs.accel_scale" => episode.observation.accel_scale,
            "ppo.batch_size" => ppo.batch_size,
            "ppo.lr" => ppo.lr,
            "ppo.entropy_coef" => ppo.entropy_coef,
            "ppo.horizon" => ppo.horizon,
            "ppo.clip_eps" => ppo.clip_eps,
            "ppo.gamma" => ppo.gamma,
            "ppo.gae_lambda" => ppo.gae_lambda,
            "ppo.epochs" => ppo.epochs,
            "ppo.value_coef" => ppo.value_coef,
            "ppo.n_envs" => ppo.n_envs,
            "ppo.max_grad_norm" => ppo.max_grad_norm,
            "ppo.momentum" => ppo.momentum,
            "ppo.reward_scale" => ppo.reward_scale,
            "net.raster_embed" => net.raster_embed,
            "net.vec_hidden" => net.vec_hidden,
            "net.fusion" => net.fusion,
        }
    };
}

impl TrainConfig {
    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! setter {
            ($($k:literal => $($f:ident).+,)*) => {
                match key {
                    $($k => self.$($f).+ = num(key, value)?,)*
                    "obs.route_offsets" => self.episode.observation.route_offsets = list(key, value)?,
                    "net.channels" => {
                        let c: Vec<usize> = list(key, value)?;
                        if c.len() != 3 {
                            return Err(Error::Config("net.channels takes three widths".into()));
                        }
                        self.net.channels = [c[0], c[1], c[2]];
                    }
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
            };
        }
        scalar_keys!(setter);
        Ok(())
    }

    /// Network shape with inputs matching the observation layout.
    pub fn net_config(&self) -> NetConfig {
        NetConfig { raster_px: self.episode.observation.raster_px, vector_dim: self.episode.observation.vector_dim(), ..self.net }
    }

    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.ppo.validate()?;
        self.net_config().validate()
    }

    /// Applies `key=value` lines.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(())
    }

    /// Applies `ZIPMERGE_*` variables from `vars`. Unknown names are errors.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let keys = Self::keys();
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let key = keys
                .iter()
                .find(|k| k.replace('.', "_").to_ascii_uppercase() == rest)
                .ok_or_else(|| Error::Config(format!("{name} does not name a config key")))?;
            self.set(key, &value)?;
        }
        Ok(())
    }

    pub fn keys() -> Vec<&'static str> {
        macro_rules! names {
            ($($k:literal => $($f:ident).+,)*) => { vec![$($k,)* "obs.route_offsets", "net.channels"] };
        }
        scalar_keys!(names)
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        macro_rules! dump {
            ($($k:literal => $($f:ident).+,)*) => {
                $(let _ = writeln!(out, "{}={}", $k, self.$($f).+);)*
            };
        }
        scalar_keys!(dump);
        let _ = writeln!(out, "obs.route_offsets={}", join(&self.episode.observation.route_offsets));
        let _ = writeln!(out, "net.channels={}", join(&self.net.channels));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig::default();
        c.apply_text("ppo.lr = 0.001 # slower\nobs.raster_px=32\nnet.channels=4,8,8\nobs.route_offsets=5,15").unwrap();
        assert_eq!(c.ppo.lr, 0.001);
        assert_eq!(c.net_config().raster_px, 32);
        let mut d = TrainConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn env_overrides() {
        let mut c = TrainConfig::default();
        c.apply_env([("ZIPMERGE_PPO_N_ENVS".to_string(), "4".to_string()), ("HOME".into(), "/x".into())]).unwrap();
        assert_eq!(c.ppo.n_envs, 4);
        assert!(c.apply_env([("ZIPMERGE_NOPE".to_string(), "1".to_string())]).is_err());
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = TrainConfig::default();
        let e = c.apply_text("ppo.lr=0.1\nbogus=1").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(c.apply_text("ppo.lr=fast").is_err());
    }
}
