use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::collision::OrientedBox;
use super::reward::{compute_reward, RewardInputs, RewardLedger, StepEvents};
use super::trace::TraceRow;
use super::traffic::{build_corridors, build_view, Body, ChangeCorridor, ViewQuery};
use super::{AgentId, AgentKind, EpisodeConfig, Outcome, PolicyDriver, Population};
use crate::dynamics::{step, ControlInput, Signal, VehicleGeometry, VehicleState};
use crate::error::{Error, Result};
use crate::idm::{idm_policy_step, sample_idm_params, IdmAgentState};
use crate::observation::{observe, ObservationFrame};
use crate::road::{Label, LaneId, RoadMap, Route};

/// Who decides an agent's controls.
#[derive(Clone)]
pub enum Controller {
    /// Controls arrive through [`World::step`].
    External,
    Idm(IdmAgentState),
    Policy(Arc<dyn PolicyDriver>),
    /// The same controls every step.
    Fixed(ControlInput),
}

impl std::fmt::Debug for Controller {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Controller::External => f.write_str("External"),
            Controller::Idm(st) => f.debug_tuple("Idm").field(st).finish(),
            Controller::Policy(_) => f.write_str("Policy"),
            Controller::Fixed(c) => f.debug_tuple("Fixed").field(c).finish(),
        }
    }
}

/// How the ego is driven after [`World::reset`].
#[derive(Clone)]
pub enum EgoMode {
    External,
    Idm,
    Policy(Arc<dyn PolicyDriver>),
}

#[derive(Debug, Clone)]
pub struct AgentRecord {
    pub id: AgentId,
    pub kind: AgentKind,
    pub controller: Controller,
    pub route: Route,
    pub goal: Label,
    pub state: VehicleState,
    /// State one step earlier; drawn faded in observations.
    pub prev_state: Option<VehicleState>,
    pub geom: VehicleGeometry,
    pub signal: Signal,
    /// Clamped controls applied on the last step.
    pub last_control: ControlInput,
    pub alive: bool,
    pub outcome: Option<Outcome>,
}

impl AgentRecord {
    pub fn obb(&self) -> OrientedBox {
        OrientedBox::of_vehicle(&self.state, &self.geom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub id: AgentId,
    pub kind: AgentKind,
    pub control: ControlInput,
    pub outcome: Option<Outcome>,
    /// Only the ego is rewarded.
    pub reward: Option<RewardLedger>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub outcomes: Vec<StepOutcome>,
    pub collisions: Vec<(AgentId, AgentId)>,
    pub ego_reward: Option<RewardLedger>,
    pub ego_outcome: Option<Outcome>,
    /// The episode ended on this step.
    pub done: bool,
}

/// Terminal cause for one agent after dynamics, by priority
/// collision > out-of-bounds > success > timeout.
pub fn check_termination(
    agent: &AgentRecord,
    map: &RoadMap,
    config: &EpisodeConfig,
    collided: bool,
    timed_out: bool,
) -> Option<Outcome> {
    if collided {
        Some(Outcome::Collision)
    } else if map.is_out_of_bounds(agent.state.position()) {
        Some(Outcome::OutOfBounds)
    } else if arrived(agent, map, config) {
        Some(Outcome::Success)
    } else if timed_out {
        Some(Outcome::Timeout)
    } else {
        None
    }
}

/// Centroid within the success radius of the route end, on the route, and
/// the route ends at the agent's goal.
fn arrived(agent: &AgentRecord, map: &RoadMap, config: &EpisodeConfig) -> bool {
    let last = map.lane(agent.route.last_lane()).unwrap();
    if last.label != Some(agent.goal) {
        return false;
    }
    let pr = agent.route.project(agent.state.position());
    agent.route.length() - pr.s <= config.success_radius && pr.d.abs() <= 0.5 * last.width
}

/// Intersecting pairs among live agents, as ordered id pairs `(a, b)` with `a < b`.
pub fn detect_collisions(world: &World) -> Vec<(AgentId, AgentId)> {
    let live: Vec<&AgentRecord> = world.agents.iter().filter(|a| a.alive).collect();
    let boxes: Vec<OrientedBox> = live.iter().map(|a| a.obb()).collect();
    super::collision::intersecting_pairs(&boxes)
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (live[i].id, live[j].id);
            (a.min(b), a.max(b))
        })
        .collect()
}

/// One environment instance.
pub struct World {
    map: Arc<RoadMap>,
    corridors: Arc<BTreeMap<LaneId, ChangeCorridor>>,
    config: EpisodeConfig,
    population: Population,
    ego_mode: EgoMode,
    agents: Vec<AgentRecord>,
    ego: Option<usize>,
    step_index: u64,
    /// Global parameter-update counter; drives penalty annealing.
    pub update_index: u64,
    rng: ChaCha8Rng,
    next_id: AgentId,
    closed: bool,
    trace: Option<Vec<TraceRow>>,
}

/// Steps to wait for a free entrance before clearing one for the ego.
const EGO_SPAWN_PATIENCE: u32 = 100;

impl World {
    pub fn new(map: Arc<RoadMap>, config: EpisodeConfig, population: Population, ego_mode: EgoMode) -> Result<Self> {
        config.validate()?;
        for kind in population.sampler.kinds() {
            if kind.is_policy() && !population.drivers.contains_key(&kind) {
                return Err(Error::Config(format!("population samples {kind} but has no driver for it")));
            }
        }
        let corridors = Arc::new(build_corridors(&map));
        Ok(Self {
            map,
            corridors,
            config,
            population,
            ego_mode,
            agents: Vec::new(),
            ego: None,
            step_index: 0,
            update_index: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            next_id: 0,
            closed: false,
            trace: None,
        })
    }

    /// A world with rule-based sparring agents and an externally driven ego.
    pub fn with_defaults(map: Arc<RoadMap>, config: EpisodeConfig) -> Result<Self> {
        Self::new(map, config, Population::idm_only(), EgoMode::External)
    }

    /// Clears the world, simulates the warm-up, then places the ego at a free entrance.
    pub fn reset(&mut self, seed: u64) -> Result<()> {
        self.clear(seed);
        for _ in 0..self.config.warmup_steps {
            self.step(None)?;
        }
        let mut tries = 0;
        // Stalled sparring agents can block every entrance indefinitely; after
        // a while the ones in the way are removed.
        while !self.try_spawn_ego(tries >= EGO_SPAWN_PATIENCE)? {
            tries += 1;
            self.step(None)?;
        }
        self.step_index = 0;
        if let Some(t) = &mut self.trace {
            t.clear();
        }
        Ok(())
    }

    /// Removes every agent and reseeds, without warm-up or ego.
    pub fn clear(&mut self, seed: u64) {
        self.agents.clear();
        self.ego = None;
        self.step_index = 0;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.next_id = 0;
        self.closed = false;
        if let Some(t) = &mut self.trace {
            t.clear();
        }
    }

    fn try_spawn_ego(&mut self, evict: bool) -> Result<bool> {
        let mut labels = self.map.spawn_labels();
        labels.shuffle(&mut self.rng);
        let v = self.rng.random_range(self.config.init_vel_min..=self.config.init_vel_max);
        for label in labels {
            let goals = self.map.reachable_goals(label);
            let goal = goals[self.rng.random_range(0..goals.len())];
            let route = self.map.plan_route(label, goal, &mut self.rng)?;
            let state = start_state(&route, v);
            let probe = OrientedBox::of_vehicle(&state, &self.config.geometry).inflate(self.config.spawn_clearance);
            if self.occupied(&probe) {
                if !evict {
                    continue;
                }
                // Removed agents are closed out like drivers still on the road at the end.
                for a in self.agents.iter_mut().filter(|a| a.alive && a.obb().intersects(&probe)) {
                    a.alive = false;
                    a.outcome = Some(Outcome::Timeout);
                }
            }
            let controller = match &self.ego_mode {
                EgoMode::External => Controller::External,
                EgoMode::Idm => {
                    let params = sample_idm_params(&mut self.rng, &self.config.idm);
                    Controller::Idm(IdmAgentState::new(route.lane_ids[0], params))
                }
                EgoMode::Policy(d) => Controller::Policy(d.clone()),
            };
            self.place_ego(state, route, goal, controller);
            return Ok(true);
        }
        Ok(false)
    }

    fn occupied(&self, probe: &OrientedBox) -> bool {
        self.agents.iter().any(|a| a.alive && a.obb().intersects(probe))
    }

    /// Adds an agent as-is, without any occupancy check.
    pub fn insert_agent(
        &mut self,
        kind: AgentKind,
        state: VehicleState,
        route: Route,
        goal: Label,
        controller: Controller,
    ) -> AgentId {
        let id = self.next_id;
        self.next_id += 1;
        self.agents.push(AgentRecord {
            id,
            kind,
            controller,
            route,
            goal,
            state,
            prev_state: None,
            geom: self.config.geometry,
            signal: Signal::Off,
            last_control: ControlInput::default(),
            alive: true,
            outcome: None,
        });
        id
    }

    /// Adds the ego. Panics if there already is one.
    pub fn place_ego(&mut self, state: VehicleState, route: Route, goal: Label, controller: Controller) -> AgentId {
        assert!(self.ego.is_none(), "ego already placed");
        let id = self.insert_agent(AgentKind::EgoLearner, state, route, goal, controller);
        self.ego = Some(self.agents.len() - 1);
        id
    }

    /// For each entrance, with probability `spawn_prob`, spawns a sparring
    /// agent at the lane start unless the spot is taken or the cap is reached.
    pub fn spawn_tick(&mut self) -> Result<()> {
        for label in self.map.spawn_labels() {
            if self.rng.random::<f64>() >= self.config.spawn_prob {
                continue;
            }
            let kind = self.population.sampler.sample(&mut self.rng);
            let v = self.rng.random_range(self.config.init_vel_min..=self.config.init_vel_max);
            let goals = self.map.reachable_goals(label);
            let goal = goals[self.rng.random_range(0..goals.len())];
            let route = self.map.plan_route(label, goal, &mut self.rng)?;
            let params = sample_idm_params(&mut self.rng, &self.config.idm);

            let live_others = self.agents.iter().filter(|a| a.alive && a.kind != AgentKind::EgoLearner).count();
            if live_others >= self.config.n_other_agents_max {
                continue;
            }
            let state = start_state(&route, v);
            let probe = OrientedBox::of_vehicle(&state, &self.config.geometry).inflate(self.config.spawn_clearance);
            if self.occupied(&probe) {
                continue;
            }
            let controller = match kind {
                AgentKind::Idm => Controller::Idm(IdmAgentState::new(route.lane_ids[0], params)),
                k => Controller::Policy(
                    self.population
                        .drivers
                        .get(&k)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("no driver for {k}")))?,
                ),
            };
            self.insert_agent(kind, state, route, goal, controller);
        }
        Ok(())
    }

    /// Advances every agent one synchronous step.
    ///
    /// Order: spawn, decide (all from the pre-step world), clamp and
    /// integrate, detect events, reward the ego, apply terminations.
    pub fn step(&mut self, ego_action: Option<ControlInput>) -> Result<StepReport> {
        if self.closed {
            return Err(Error::EpisodeClosed);
        }
        self.spawn_tick()?;

        let live: Vec<usize> = (0..self.agents.len()).filter(|&i| self.agents[i].alive).collect();
        let mut decisions: Vec<(ControlInput, Option<IdmAgentState>)> = Vec::with_capacity(live.len());
        let bodies: Vec<Body> = live.iter().map(|&i| self.body(i)).collect();
        for (k, &i) in live.iter().enumerate() {
            let a = &self.agents[i];
            let raw = match &a.controller {
                Controller::External => {
                    let c = ego_action.ok_or_else(|| Error::InvalidControl("missing action for the ego".into()))?;
                    (c, None)
                }
                Controller::Fixed(c) => (*c, None),
                Controller::Idm(st) => {
                    let others: Vec<Body> =
                        bodies.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, b)| *b).collect();
                    let q = ViewQuery { map: &self.map, corridors: &self.corridors, route: &a.route, committed: st.committed() };
                    let view = build_view(&q, a.state.pose(), &bodies[k], a.geom, &others);
                    let (c, next) = idm_policy_step(&view, st, self.config.dt);
                    (c, Some(next))
                }
                Controller::Policy(d) => {
                    let obs = self.observe(a.id)?;
                    (d.act(&obs)?, None)
                }
            };
            let clamped = self.config.limits.clamp(raw.0)?;
            decisions.push((clamped, raw.1));
        }

        let mut prev_steer = Vec::with_capacity(live.len());
        for (&i, (control, idm)) in live.iter().zip(decisions) {
            let a = &mut self.agents[i];
            prev_steer.push(a.last_control.steer);
            a.prev_state = Some(a.state);
            a.state = step(&a.state, &control, &a.geom, self.config.dt);
            a.signal = control.signal;
            a.last_control = control;
            if let Some(st) = idm {
                a.controller = Controller::Idm(st);
            }
        }
        for &i in &live {
            self.replan_if_missed(i);
        }

        let collisions = detect_collisions(self);
        self.step_index += 1;
        let timed_out = self.step_index >= self.config.max_steps;

        let mut report = StepReport { collisions: collisions.clone(), ..Default::default() };
        for (k, &i) in live.iter().enumerate() {
            let a = &self.agents[i];
            let is_ego = self.ego == Some(i);
            let collided = collisions.iter().any(|&(x, y)| x == a.id || y == a.id);
            let outcome = check_termination(a, &self.map, &self.config, collided, is_ego && timed_out);
            let reward = is_ego.then(|| {
                let events = StepEvents {
                    success: outcome == Some(Outcome::Success),
                    collision: outcome == Some(Outcome::Collision),
                    oob: outcome == Some(Outcome::OutOfBounds),
                };
                let (_, pr) = self.map.nearest_lane(a.state.position());
                let inputs = RewardInputs {
                    speed: a.state.v,
                    signal: a.signal,
                    center_offset: pr.d,
                    steer: a.last_control.steer,
                    prev_steer: prev_steer[k],
                };
                compute_reward(&inputs, &events, &self.config.reward, self.update_index)
            });
            if is_ego {
                report.ego_reward = reward;
                report.ego_outcome = outcome;
            }
            report.outcomes.push(StepOutcome { id: a.id, kind: a.kind, control: a.last_control, outcome, reward });
        }
        for (k, &i) in live.iter().enumerate() {
            if let Some(o) = report.outcomes[k].outcome {
                let a = &mut self.agents[i];
                a.alive = false;
                a.outcome = Some(o);
                if self.ego == Some(i) {
                    self.closed = true;
                    report.done = true;
                }
            }
        }
        if self.closed {
            // Whoever is still driving when the episode ends times out.
            for a in self.agents.iter_mut().filter(|a| a.alive) {
                a.alive = false;
                a.outcome = Some(Outcome::Timeout);
                if let Some(o) = report.outcomes.iter_mut().find(|o| o.id == a.id) {
                    o.outcome = Some(Outcome::Timeout);
                }
            }
        }
        if let Some(trace) = self.trace.as_mut() {
            trace.extend(live.iter().zip(&report.outcomes).map(|(&i, o)| TraceRow::from_agent(self.step_index, &self.agents[i], o)));
        }
        Ok(report)
    }

    fn body(&self, i: usize) -> Body {
        let a = &self.agents[i];
        Body { position: a.state.position(), speed: a.state.v, length: a.geom.length }
    }

    /// A rule-based driver that drove past its connector without committing
    /// gets a new route from the straight continuation.
    fn replan_if_missed(&mut self, i: usize) {
        let a = &self.agents[i];
        let Controller::Idm(st) = &a.controller else { return };
        let s = a.route.project(a.state.position()).s;
        let idx = a.route.lane_index_at(s);
        let lane = a.route.lane_ids[idx];
        if idx == 0 || !self.corridors.contains_key(&lane) || st.target_lane == Some(lane) {
            return;
        }
        let before = a.route.lane_ids[idx - 1];
        let goal = a.goal;
        let mut ids = vec![before];
        let straight = self.map.straight_successor(before);
        match straight.and_then(|n| self.map.plan_route_from(&[n], goal, &mut self.rng)) {
            Some(r) => ids.extend(r.lane_ids),
            None => {
                let mut cur = before;
                while let Some(n) = self.map.straight_successor(cur) {
                    if ids.contains(&n) {
                        break;
                    }
                    ids.push(n);
                    cur = n;
                }
            }
        }
        let route = Route::from_lanes(&self.map, ids).expect("replanned lanes are connected");
        let a = &mut self.agents[i];
        a.route = route;
        if let Controller::Idm(st) = &mut a.controller {
            st.current_lane = before;
            st.target_lane = None;
            st.signal = Signal::Off;
            st.signal_elapsed = 0.0;
        }
    }

    /// Observation of agent `id` in its own frame.
    pub fn observe(&self, id: AgentId) -> Result<ObservationFrame> {
        observe(self, id, &self.config.observation)
    }

    pub fn map(&self) -> &RoadMap {
        &self.map
    }

    pub fn map_arc(&self) -> &Arc<RoadMap> {
        &self.map
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut EpisodeConfig {
        &mut self.config
    }

    pub fn agents(&self) -> &[AgentRecord] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentRecord> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn agent_mut(&mut self, id: AgentId) -> Option<&mut AgentRecord> {
        self.agents.iter_mut().find(|a| a.id == id)
    }

    pub fn live_agents(&self) -> impl Iterator<Item = &AgentRecord> {
        self.agents.iter().filter(|a| a.alive)
    }

    pub fn ego(&self) -> Option<&AgentRecord> {
        self.ego.map(|i| &self.agents[i])
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn set_population(&mut self, population: Population) {
        self.population = population;
    }

    pub fn set_ego_mode(&mut self, mode: EgoMode) {
        self.ego_mode = mode;
    }

    /// Starts recording one trace row per live agent per step.
    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRow] {
        self.trace.as_deref().unwrap_or(&[])
    }
}

/// Vehicle state at the start of a route, heading along its first segment.
pub(crate) fn start_state(route: &Route, v: f64) -> VehicleState {
    let (p, heading) = route.sample(0.0);
    VehicleState::new(p.x, p.y, heading, v)
}
