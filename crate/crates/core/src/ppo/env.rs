use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::buffer::{EpisodeSummary, RolloutBuffer, Transition};
use crate::dynamics::ControlInput;
use crate::error::{Error, Result};
use crate::observation::ObservationFrame;
use crate::policy::{evaluate, sample_action, PolicyParams, SampleMode};
use crate::sim::{Outcome, World};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep {
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<Outcome>,
}

/// A single-learner episodic task.
pub trait Environment: Send {
    fn reset(&mut self, seed: u64) -> Result<()>;
    fn observe(&self) -> Result<ObservationFrame>;
    fn step(&mut self, action: ControlInput) -> Result<EnvStep>;
    /// Global update counter, for reward annealing.
    fn set_update_index(&mut self, _update: u64) {}
}

impl Environment for World {
    fn reset(&mut self, seed: u64) -> Result<()> {
        World::reset(self, seed)
    }

    fn observe(&self) -> Result<ObservationFrame> {
        let ego = self.ego().ok_or_else(|| Error::Config("world has no ego".into()))?;
        World::observe(self, ego.id)
    }

    fn step(&mut self, action: ControlInput) -> Result<EnvStep> {
        let report = World::step(self, Some(action))?;
        Ok(EnvStep {
            reward: report.ego_reward.map(|r| r.total()).unwrap_or(0.0),
            done: report.done,
            outcome: report.ego_outcome,
        })
    }

    fn set_update_index(&mut self, update: u64) {
        self.update_index = update;
    }
}

struct Slot<E> {
    env: E,
    rng: ChaCha8Rng,
    needs_reset: bool,
    episode: u64,
    ep_return: f64,
    ep_len: u64,
}

/// A fixed set of environments, each with its own seed-derived random stream.
pub struct VecEnv<E> {
    slots: Vec<Slot<E>>,
}

impl<E: Environment> VecEnv<E> {
    /// Environment `i` draws from stream `i` of a generator seeded with `seed`.
    pub fn new(envs: Vec<E>, seed: u64) -> Self {
        let slots = envs
            .into_iter()
            .enumerate()
            .map(|(i, env)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                Slot { env, rng, needs_reset: true, episode: 0, ep_return: 0.0, ep_len: 0 }
            })
            .collect();
        Self { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn envs_mut(&mut self) -> impl Iterator<Item = &mut E> {
        self.slots.iter_mut().map(|s| &mut s.env)
    }

    pub fn set_update_index(&mut self, update: u64) {
        for s in &mut self.slots {
            s.env.set_update_index(update);
        }
    }

    /// Forces every environment to start a fresh episode on the next step.
    pub fn mark_for_reset(&mut self) {
        for s in &mut self.slots {
            s.needs_reset = true;
            s.ep_return = 0.0;
            s.ep_len = 0;
        }
    }
}

type SlotOut = (Vec<Transition>, f64, Vec<EpisodeSummary>);

fn run_slot<E: Environment>(index: usize, slot: &mut Slot<E>, params: &PolicyParams, horizon: usize) -> Result<SlotOut> {
    let mut steps = Vec::with_capacity(horizon);
    let mut done_eps = Vec::new();
    for t in 0..horizon {
        if slot.needs_reset {
            let seed = slot.rng.random::<u64>();
            slot.env.reset(seed)?;
            slot.needs_reset = false;
            slot.ep_return = 0.0;
            slot.ep_len = 0;
        }
        let obs = slot.env.observe()?;
        let (d, _) = evaluate(params, &obs)?;
        let action = sample_action(&d, &mut slot.rng, SampleMode::Explore);
        let st = slot.env.step(action.control())?;
        slot.ep_return += st.reward;
        slot.ep_len += 1;
        steps.push(Transition {
            log_prob: action.log_prob,
            obs,
            action,
            reward: st.reward,
            value: d.value,
            done: st.done,
            episode: slot.episode,
        });
        if st.done {
            done_eps.push(EpisodeSummary {
                env: index,
                step: t,
                ret: slot.ep_return,
                length: slot.ep_len,
                outcome: st.outcome,
            });
            slot.episode += 1;
            slot.needs_reset = true;
        }
    }
    let bootstrap = if slot.needs_reset {
        0.0
    } else {
        let obs = slot.env.observe()?;
        evaluate(params, &obs)?.0.value
    };
    Ok((steps, bootstrap, done_eps))
}

/// Steps every environment `horizon` times with exploration noise.
/// Workers run concurrently but the buffer is laid out by (env, t), so the
/// result does not depend on scheduling.
pub fn collect_rollouts<E: Environment>(venv: &mut VecEnv<E>, params: &PolicyParams, horizon: usize) -> Result<RolloutBuffer> {
    let outs: Vec<Result<SlotOut>> = venv
        .slots
        .par_iter_mut()
        .enumerate()
        .map(|(i, slot)| run_slot(i, slot, params, horizon).map_err(|e| Error::Env { index: i, source: Box::new(e) }))
        .collect();
    let mut buf = RolloutBuffer::with_capacity(venv.len(), horizon);
    for out in outs {
        let (steps, bootstrap, eps) = out?;
        buf.push_env(steps, bootstrap, eps);
    }
    Ok(buf)
}
