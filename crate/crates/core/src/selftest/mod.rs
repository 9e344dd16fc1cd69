//! Oracle checks that run outside the test harness (`zipmerge selftest`).
//!
//! Every check pits a component against an independent reference: a closed
//! form, a brute-force sort, dense sampling or finite differences. The
//! integration tests call the same functions at full size.

mod long;

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{clamp_controls, slip_angle, step, ControlInput, Signal, VehicleGeometry, VehicleState, ACCEL_MAX, ACCEL_MIN, DT, STEER_BOUND};
use crate::geometry::{RigidTransform, Vec2};
use crate::idm::{idm_policy_step, lookahead_distance, IdmAgentState, IdmParams, Leader, NeighborhoodView};
use crate::observation::{encode_vector, nearest_neighbors, rasterize, Canvas, ObservationFrame, ObservationSpec, RasterImage};
use crate::policy::{evaluate, log_prob_and_entropy, sample_action, ActionSample, NetConfig, PolicyParams, SampleMode};
use crate::ppo::{clipped_surrogate, compute_gae, ppo_loss, LossItem, PpoConfig};
use crate::road::{Label, RoadMap, Route};
use crate::selfplay::{KindSampler, PopulationSpec};
use crate::sim::{anneal_penalties, compute_reward, AgentKind, AgentRecord, Controller, OrientedBox, RewardConfig, RewardInputs, RewardLedger, StepEvents};

pub use long::{
    compact_config, directional_config, directional_selfplay, learning_smoke, smoke_config, stub_schedule_artifacts, throughput, DirectionalResult,
    RunArtifacts, Throughput, SMOKE_EVAL_EPISODES,
};

/// How much work each check does. `Full` uses the documented sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effort {
    Full,
    Quick,
}

impl Effort {
    fn count(self, full: usize) -> usize {
        match self {
            Effort::Full => full,
            Effort::Quick => (full / 10).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} ({:.2} s): {}", self.name, self.seconds, self.detail)
    }
}

type CheckFn = fn(Effort) -> (bool, String);

/// Every oracle, in a stable order.
pub const CHECKS: &[(&str, CheckFn)] = &[
    ("dynamics_circle", dynamics_circle),
    ("control_clamping", control_clamping),
    ("idm_safety", idm_safety),
    ("collision_sampling", collision_sampling),
    ("reward_ledger", reward_ledger),
    ("gae_identities", gae_identities),
    ("gradient_check", gradient_check),
    ("clip_semantics", clip_semantics),
    ("observation_contracts", observation_contracts),
    ("population_sampling", population_sampling),
];

pub fn run_check(name: &str, effort: Effort) -> Option<CheckResult> {
    let &(name, f) = CHECKS.iter().find(|(n, _)| *n == name)?;
    Some(timed(name, f, effort))
}

pub fn run_all(effort: Effort) -> Vec<CheckResult> {
    CHECKS.iter().map(|&(name, f)| timed(name, f, effort)).collect()
}

fn timed(name: &'static str, f: CheckFn, effort: Effort) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = f(effort);
    CheckResult { name, passed, detail, seconds: t.elapsed().as_secs_f64() }
}

// ---------------------------------------------------------------- dynamics

/// Max distance from the exact constant-steer circle over `seconds`, relative to its radius.
pub fn circle_error(dt: f64, seconds: f64) -> f64 {
    let g = VehicleGeometry::default();
    let (v, steer) = (10.0, 0.1);
    let beta = slip_angle(steer, &g);
    let r = g.l_r / beta.sin();
    let omega = v / r;
    // Centre lies to the left of the initial velocity, which points along beta.
    let centre = Vec2::new(-r * beta.sin(), r * beta.cos());
    let c = ControlInput::new(0.0, steer, Signal::Off);
    let mut s = VehicleState::new(0.0, 0.0, 0.0, v);
    let mut worst: f64 = 0.0;
    for k in 1..=(seconds / dt).round() as usize {
        s = step(&s, &c, &g, dt);
        let th = beta + omega * k as f64 * dt;
        let exact = centre + Vec2::new(r * th.sin(), -r * th.cos());
        worst = worst.max(s.position().distance(exact));
    }
    worst / r
}

fn dynamics_circle(_: Effort) -> (bool, String) {
    let coarse = circle_error(DT, 5.0);
    let fine = circle_error(DT / 2.0, 5.0);
    let ratio = coarse / fine;
    let ok = coarse < 0.05 && (1.5..=2.5).contains(&ratio);
    (ok, format!("relative error {coarse:.4} at dt=0.1, halving ratio {ratio:.3}"))
}

// The expected values are spelled out branch by branch so the oracle does
// not share code with the clamp under test.
#[allow(clippy::manual_clamp)]
fn control_clamping(effort: Effort) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = effort.count(10_000);
    let mut bad = 0;
    for _ in 0..n {
        let (a, s) = (rng.random_range(-20.0..20.0), rng.random_range(-2.0..2.0));
        let c = clamp_controls(ControlInput::new(a, s, Signal::Off)).expect("finite input");
        let ea = if a < ACCEL_MIN { ACCEL_MIN } else if a > ACCEL_MAX { ACCEL_MAX } else { a };
        let es = if s < -STEER_BOUND { -STEER_BOUND } else if s > STEER_BOUND { STEER_BOUND } else { s };
        bad += usize::from(c.accel != ea || c.steer != es);
    }
    let nan_rejected = clamp_controls(ControlInput::new(f64::NAN, 0.0, Signal::Off)).is_err();
    (bad == 0 && nan_rejected, format!("{bad} of {n} inputs clamped wrongly, NaN rejected: {nan_rejected}"))
}

// ---------------------------------------------------------------- IDM

fn straight_view(x: f64, v: f64, leader: Option<Leader>) -> NeighborhoodView {
    NeighborhoodView {
        pose: crate::geometry::Pose::new(x, 0.0, 0.0),
        speed: v,
        geometry: VehicleGeometry::default(),
        leader,
        target_leader: None,
        lookahead: Vec2::new(x + lookahead_distance(v), 0.0),
        upcoming_change: None,
        on_connector: false,
    }
}

/// Follows a stopped car whose rear is 100 m ahead. Returns (collided, final bumper gap).
pub fn stopped_leader_run(v_init: f64, seconds: f64) -> (bool, f64) {
    let p = IdmParams::default();
    let g = VehicleGeometry::default();
    let leader_x = 100.0 + g.length;
    let agent = IdmAgentState::new(1, p);
    let mut st = VehicleState::new(0.0, 0.0, 0.0, v_init);
    let mut collided = false;
    for _ in 0..(seconds / DT).round() as usize {
        let gap = leader_x - st.x - g.length;
        let view = straight_view(st.x, st.v, Some(Leader { gap, closing_speed: st.v }));
        let (c, _) = idm_policy_step(&view, &agent, DT);
        st = step(&st, &clamp_controls(c).expect("IDM emits finite controls"), &g, DT);
        collided |= leader_x - st.x < g.length;
    }
    (collided, leader_x - st.x - g.length)
}

/// Speed after `seconds` on an empty road from standstill.
pub fn free_road_speed(seconds: f64) -> f64 {
    let p = IdmParams::default();
    let g = VehicleGeometry::default();
    let agent = IdmAgentState::new(1, p);
    let mut st = VehicleState::new(0.0, 0.0, 0.0, 0.0);
    for _ in 0..(seconds / DT).round() as usize {
        let (c, _) = idm_policy_step(&straight_view(st.x, st.v, None), &agent, DT);
        st = step(&st, &clamp_controls(c).expect("IDM emits finite controls"), &g, DT);
    }
    st.v
}

fn idm_safety(_: Effort) -> (bool, String) {
    let p = IdmParams::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for v in [5.0, 10.0, 15.0, 20.0] {
        let (hit, gap) = stopped_leader_run(v, 60.0);
        ok &= !hit && gap >= p.s0 - 0.5 && gap <= p.s0 + 2.0;
        parts.push(format!("v={v}: gap {gap:.2}{}", if hit { " HIT" } else { "" }));
    }
    let vf = free_road_speed(60.0);
    ok &= (vf - p.v0).abs() < 0.1;
    (ok, format!("{}; free road {vf:.3} m/s vs v0 {}", parts.join(", "), p.v0))
}

// ---------------------------------------------------------------- collision

/// Signed depth of `p` in `b`: positive inside, negative outside.
fn depth(b: &OrientedBox, p: Vec2) -> f64 {
    let (f, l) = b.axes();
    let d = p - b.center;
    (b.half_length - d.dot(f).abs()).min(b.half_width - d.dot(l).abs())
}

/// Jittered samples: `n_edge` strata along the perimeter and `n_in` over the area.
fn box_samples<R: Rng>(b: &OrientedBox, n_edge: usize, n_in: usize, rng: &mut R, out: &mut Vec<Vec2>) {
    let c = b.corners();
    let perim = 4.0 * (b.half_length + b.half_width);
    let lens: Vec<f64> = (0..4).map(|i| c[i].distance(c[(i + 1) % 4])).collect();
    for k in 0..n_edge {
        let mut s = (k as f64 + rng.random::<f64>()) / n_edge as f64 * perim;
        let mut i = 0;
        while i < 3 && s > lens[i] {
            s -= lens[i];
            i += 1;
        }
        out.push(c[i].lerp(c[(i + 1) % 4], (s / lens[i]).min(1.0)));
    }
    let (f, l) = b.axes();
    for _ in 0..n_in {
        let u = rng.random_range(-1.0..=1.0) * b.half_length;
        let v = rng.random_range(-1.0..=1.0) * b.half_width;
        out.push(b.center + f * u + l * v);
    }
}

/// Half-extent of `b` projected on unit `u`.
fn reach(b: &OrientedBox, u: Vec2) -> f64 {
    let (f, l) = b.axes();
    b.half_length * f.dot(u).abs() + b.half_width * l.dot(u).abs()
}

/// A randomized pair whose boxes nearly touch.
pub fn near_touching_pair<R: Rng>(rng: &mut R) -> (OrientedBox, OrientedBox) {
    let random_box = |rng: &mut R, center| {
        OrientedBox::new(center, rng.random_range(-3.2..3.2), rng.random_range(3.0..6.0), rng.random_range(1.4..2.4))
    };
    let centre = Vec2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
    let a = random_box(rng, centre);
    let mut b = random_box(rng, Vec2::default());
    let u = Vec2::from_angle(rng.random_range(-3.2..3.2));
    let gap = rng.random_range(-0.6..0.3);
    b.center = a.center + u * (reach(&a, u) + reach(&b, u) + gap);
    (a, b)
}

/// Sampling verdict for one pair: the largest `min(depth_a, depth_b)` over the
/// samples. Non-negative means some sample lies in both boxes.
pub fn sampled_overlap<R: Rng>(a: &OrientedBox, b: &OrientedBox, samples: usize, rng: &mut R) -> f64 {
    let per_box = samples / 2;
    let n_edge = per_box * 3 / 4;
    let mut pts = Vec::with_capacity(samples);
    box_samples(a, n_edge, per_box - n_edge, rng, &mut pts);
    box_samples(b, n_edge, per_box - n_edge, rng, &mut pts);
    pts.iter().map(|&p| depth(a, p).min(depth(b, p))).fold(f64::NEG_INFINITY, f64::max)
}

fn collision_sampling(effort: Effort) -> (bool, String) {
    const MARGIN: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs = effort.count(1000);
    let samples = effort.count(100_000).max(10_000);
    let (mut wrong, mut ambiguous, mut hits) = (0, 0, 0);
    for _ in 0..pairs {
        let (a, b) = near_touching_pair(&mut rng);
        let m = sampled_overlap(&a, &b, samples, &mut rng);
        let sat = a.intersects(&b);
        hits += usize::from(sat);
        // Within the margin the sampled verdict is not trusted either way.
        if m.abs() <= MARGIN / 2.0 {
            ambiguous += 1;
        } else if sat != (m >= 0.0) {
            wrong += 1;
        }
    }
    (wrong == 0, format!("{wrong} disagreements over {pairs} pairs ({hits} overlapping, {ambiguous} within margin), {samples} samples each"))
}

// ---------------------------------------------------------------- reward

/// The scripted five-step episode: cruise at 10 m/s, signal on the last two
/// steps, 1 m off centre on the last, success at the end.
pub fn scripted_reward_episode() -> RewardLedger {
    let cfg = RewardConfig::default();
    let mut total = RewardLedger::default();
    for k in 0..5 {
        let inputs = RewardInputs {
            speed: 10.0,
            signal: if k >= 3 { Signal::Left } else { Signal::Off },
            center_offset: if k == 4 { 1.0 } else { 0.0 },
            ..Default::default()
        };
        let events = StepEvents { success: k == 4, ..Default::default() };
        total.accumulate(&compute_reward(&inputs, &events, &cfg, 0));
    }
    total
}

fn reward_ledger(_: Effort) -> (bool, String) {
    let l = scripted_reward_episode();
    let expected = 100.0 + 3.0 * 1.0 + 1.0 * (1.0 - 0.1) + 1.0 * (1.0 - 0.1 - 0.1);
    let cfg = RewardConfig::default();
    let ends = (anneal_penalties(0, &cfg), anneal_penalties(1000, &cfg));
    let ok = (l.total() - expected).abs() < 1e-12
        && l.success == 100.0
        && l.velocity == 5.0
        && ends == ((-100.0, -100.0), (-500.0, -250.0));
    (ok, format!("total {} (expected {expected}), anneal {ends:?}", l.total()))
}

// ---------------------------------------------------------------- PPO

fn discounted(r: &[f64], gamma: f64) -> Vec<f64> {
    (0..r.len()).map(|t| (t..r.len()).map(|k| gamma.powi((k - t) as i32) * r[k]).sum()).collect()
}

fn gae_identities(effort: Effort) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let n_seq = effort.count(100);
    for _ in 0..n_seq {
        let n = rng.random_range(1..40);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut d = vec![false; n];
        d[n - 1] = true;
        let gamma = rng.random_range(0.8..1.0);

        let (a0, _) = compute_gae(&r, &v, &d, 123.0, gamma, 0.0);
        for t in 0..n {
            let next = if t + 1 < n { v[t + 1] } else { 0.0 };
            worst = worst.max((a0[t] - (r[t] + gamma * next - v[t])).abs());
        }
        let (a1, _) = compute_gae(&r, &v, &d, 123.0, gamma, 1.0);
        for (t, g) in discounted(&r, gamma).into_iter().enumerate() {
            worst = worst.max((a1[t] - (g - v[t])).abs());
        }
        let (plain, _) = compute_gae(&r, &vec![0.0; n], &d, 0.0, 1.0, 1.0);
        for (x, y) in plain.iter().zip(discounted(&r, 1.0)) {
            worst = worst.max((x - y).abs());
        }
    }
    (worst < 1e-9, format!("max deviation {worst:.2e} over {n_seq} episodes"))
}

/// Random observation for `cfg` with a sparse painted raster.
pub fn random_frame<R: Rng>(cfg: &NetConfig, rng: &mut R) -> ObservationFrame {
    let n = cfg.raster_px;
    let mut canvas = Canvas::new(n, n);
    for r in 0..n {
        for c in 0..n {
            if rng.random::<f64>() < 0.4 {
                canvas.set(r, c, [rng.random(), rng.random(), rng.random()]);
            }
        }
    }
    let vector = (0..cfg.vector_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    ObservationFrame { raster: RasterImage { canvas, meters_per_pixel: 1.0 }, vector }
}

/// Initial parameters plus noise so every path carries gradient.
pub fn lively_params<R: Rng>(cfg: NetConfig, rng: &mut R) -> PolicyParams {
    let mut p = PolicyParams::init(cfg, rng);
    for x in &mut p.data {
        *x += rng.random_range(-0.3..0.3);
    }
    p
}

/// An exploring action sample for `obs`.
pub fn explore<R: Rng>(params: &PolicyParams, obs: &ObservationFrame, rng: &mut R) -> ActionSample {
    let (d, _) = evaluate(params, obs).expect("frame matches net");
    sample_action(&d, rng, SampleMode::Explore)
}

/// Worst relative error between the analytic PPO gradient and central
/// differences along `directions` random unit directions.
pub fn gradient_check_error(directions: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = NetConfig::micro();
    let params = lively_params(net, &mut rng);
    let frames: Vec<_> = (0..6).map(|_| random_frame(&net, &mut rng)).collect();
    let actions: Vec<_> = frames.iter().map(|f| explore(&params, f, &mut rng)).collect();
    let cfg = PpoConfig { entropy_coef: 0.05, ..PpoConfig::default() };
    // Old log-probs put ratios on both sides of the clip range, away from its kinks.
    let offsets = [0.0, 0.35, -0.4, 0.1, -0.05, 0.5];
    let items: Vec<LossItem> = frames
        .iter()
        .zip(&actions)
        .zip(offsets)
        .map(|((f, a), off)| {
            let (d, _) = evaluate(&params, f).expect("frame matches net");
            let lp = log_prob_and_entropy(&d, a).0;
            LossItem { obs: f, action: a, old_log_prob: lp - off, advantage: rng.random_range(-2.0..2.0), ret: rng.random_range(-3.0..3.0) }
        })
        .collect();
    let loss = |p: &PolicyParams| ppo_loss(p, &items, &cfg).expect("loss is finite").loss;
    let grads = ppo_loss(&params, &items, &cfg).expect("loss is finite").grads;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut dir: Vec<f64> = (0..params.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        let shifted = |k: f64| {
            let mut p = params.clone();
            p.data.iter_mut().zip(&dir).for_each(|(x, d)| *x += k * d);
            p
        };
        let fd = (loss(&shifted(h)) - loss(&shifted(-h))) / (2.0 * h);
        let an: f64 = grads.iter().zip(&dir).map(|(g, d)| g * d).sum();
        worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-12));
    }
    worst
}

fn gradient_check(effort: Effort) -> (bool, String) {
    let n = effort.count(100);
    let worst = gradient_check_error(n, 17);
    (worst < 1e-4, format!("worst relative error {worst:.2e} over {n} directions"))
}

/// Gradient of the policy-only loss when every ratio sits at 1.5 with positive advantages.
pub fn saturated_gradient(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = NetConfig::micro();
    let params = lively_params(net, &mut rng);
    let frames: Vec<_> = (0..4).map(|_| random_frame(&net, &mut rng)).collect();
    let actions: Vec<_> = frames.iter().map(|f| explore(&params, f, &mut rng)).collect();
    let items: Vec<LossItem> = frames
        .iter()
        .zip(&actions)
        .map(|(f, a)| {
            let (d, _) = evaluate(&params, f).expect("frame matches net");
            let lp = log_prob_and_entropy(&d, a).0;
            LossItem { obs: f, action: a, old_log_prob: lp - 1.5f64.ln(), advantage: 1.0, ret: 0.0 }
        })
        .collect();
    let cfg = PpoConfig { value_coef: 0.0, entropy_coef: 0.0, ..PpoConfig::default() };
    ppo_loss(&params, &items, &cfg).expect("loss is finite").grads
}

fn clip_semantics(effort: Effort) -> (bool, String) {
    let (_, g) = clipped_surrogate(1.5, 0.8, 0.2);
    let net_zero = saturated_gradient(4).iter().all(|&x| x == 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = effort.count(10_000);
    let violations = (0..n)
        .filter(|_| {
            let (r, a) = (rng.random_range(0.0..3.0), rng.random_range(-5.0..5.0));
            clipped_surrogate(r, a, 0.2).0 > r * a
        })
        .count();
    (g == 0.0 && net_zero && violations == 0, format!("d/dratio {g}, network grads all zero: {net_zero}, {violations} of {n} pointwise violations"))
}

// ---------------------------------------------------------------- observation

fn record(id: u32, kind: AgentKind, state: VehicleState, route: &Route) -> AgentRecord {
    AgentRecord {
        id,
        kind,
        controller: Controller::External,
        route: route.clone(),
        goal: Label::D,
        state,
        prev_state: None,
        geom: VehicleGeometry::default(),
        signal: Signal::Off,
        last_control: ControlInput::default(),
        alive: true,
        outcome: None,
    }
}

/// Ego on a planned route of `map` plus up to `max_others` agents around it.
/// Returns the records (ego first) and the route's lane ids.
pub fn random_scene<R: Rng>(map: &RoadMap, max_others: usize, rng: &mut R) -> (Vec<AgentRecord>, Vec<u32>) {
    let spawns = map.spawn_labels();
    let start = spawns[rng.random_range(0..spawns.len())];
    let goals = map.reachable_goals(start);
    let goal = goals[rng.random_range(0..goals.len())];
    let route = map.plan_route(start, goal, rng).expect("reachable goal");
    let (p, h) = route.sample(rng.random_range(0.0..route.length()));
    let kinds = [AgentKind::Idm, AgentKind::Rl, AgentKind::Sp1, AgentKind::Sp2];
    let random_agent = |id, center: Vec2, heading: f64, rng: &mut R| {
        let kind = if id == 0 { AgentKind::EgoLearner } else { kinds[rng.random_range(0..4)] };
        let v = rng.random_range(0.0..20.0);
        let s = VehicleState::new(center.x, center.y, heading, v);
        let mut a = record(id, kind, s, &route);
        if rng.random::<f64>() < 0.8 {
            a.prev_state = Some(VehicleState::new(s.x - v * DT * heading.cos(), s.y - v * DT * heading.sin(), heading, v));
        }
        a.signal = Signal::from_index(rng.random_range(0..3));
        a.last_control = ControlInput::new(rng.random_range(ACCEL_MIN..ACCEL_MAX), rng.random_range(-STEER_BOUND..STEER_BOUND), a.signal);
        a
    };
    let mut agents = vec![random_agent(0, p, h + rng.random_range(-0.2..0.2), rng)];
    for id in 1..=rng.random_range(0..=max_others) as u32 {
        let c = p + Vec2::new(rng.random_range(-35.0..35.0), rng.random_range(-35.0..35.0));
        agents.push(random_agent(id, c, rng.random_range(-3.2..3.2), rng));
    }
    (agents, route.lane_ids.clone())
}

/// Rebuilds a scene in a rigidly moved copy of the map.
pub fn moved_scene(map: &RoadMap, agents: &[AgentRecord], lane_ids: &[u32], t: &RigidTransform) -> (RoadMap, Vec<AgentRecord>) {
    let moved = map.transformed(t);
    let route = Route::from_lanes(&moved, lane_ids.to_vec()).expect("same lane graph");
    let agents = agents
        .iter()
        .map(|a| AgentRecord {
            route: route.clone(),
            state: a.state.transformed(t),
            prev_state: a.prev_state.map(|s| s.transformed(t)),
            ..a.clone()
        })
        .collect();
    (moved, agents)
}

fn observation_contracts(effort: Effort) -> (bool, String) {
    let spec = ObservationSpec::default();
    let map = RoadMap::zipper_merge();
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let mut bad_len = 0;
    let (mut raster_diff, mut vec_diff) = (0, 0.0f64);
    let rigid = effort.count(200);
    for _ in 0..rigid {
        let (agents, lanes) = random_scene(&map, 14, &mut rng);
        let t = RigidTransform::new(rng.random_range(-3.2..3.2), Vec2::new(rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3)));
        let (map2, agents2) = moved_scene(&map, &agents, &lanes, &t);
        let (ra, rb) = (rasterize(&map, &agents, &agents[0], &spec), rasterize(&map2, &agents2, &agents2[0], &spec));
        let (va, vb) = (encode_vector(&agents, &agents[0], &spec), encode_vector(&agents2, &agents2[0], &spec));
        bad_len += usize::from(va.len() != 76 || vb.len() != 76);
        raster_diff += usize::from(ra.canvas.data != rb.canvas.data);
        vec_diff = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(vec_diff, f64::max);
    }

    let scenes = effort.count(1000);
    let mut wrong_nearest = 0;
    for _ in 0..scenes {
        let (mut agents, _) = random_scene(&map, 30, &mut rng);
        // Integer offsets make exact distance ties common.
        for a in agents.iter_mut().skip(1) {
            if rng.random::<f64>() < 0.3 {
                a.state.x = a.state.x.round();
                a.state.y = a.state.y.round();
            }
            a.alive = rng.random::<f64>() < 0.9;
        }
        let me = agents[0].clone();
        let got: Vec<u32> = nearest_neighbors(&agents, &me, spec.neighbor_slots).iter().map(|a| a.id).collect();
        let mut all: Vec<(f64, u32)> =
            agents.iter().filter(|a| a.alive && a.id != me.id).map(|a| (a.state.position().distance(me.state.position()), a.id)).collect();
        all.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
        let want: Vec<u32> = all.iter().take(spec.neighbor_slots).map(|x| x.1).collect();
        let v = encode_vector(&agents, &me, &spec);
        let valid = (0..spec.neighbor_slots).filter(|s| v[s * 8 + 7] == 1.0).count();
        bad_len += usize::from(v.len() != 76);
        wrong_nearest += usize::from(got != want || valid != want.len());
    }
    let ok = bad_len == 0 && raster_diff == 0 && vec_diff < 1e-9 && wrong_nearest == 0;
    (
        ok,
        format!(
            "{rigid} moved scenes: {raster_diff} raster mismatches, vector diff {vec_diff:.2e}; \
             {wrong_nearest} of {scenes} neighbour selections wrong; {bad_len} bad lengths"
        ),
    )
}

// ---------------------------------------------------------------- population

// The ±2% band is sized for 10⁴ draws, which are cheap, so effort is ignored.
fn population_sampling(_: Effort) -> (bool, String) {
    let n = 10_000;
    let mut ok = true;
    let mut parts = Vec::new();
    for row in 1..=4 {
        let spec = PopulationSpec::table_row(row).expect("table row");
        let sampler = KindSampler::new(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + row as u64);
        let kinds: Vec<AgentKind> = spec.active_kinds().collect();
        let mut counts = vec![0usize; kinds.len()];
        for _ in 0..n {
            let k = sampler.sample(&mut rng);
            counts[kinds.iter().position(|&x| x == k).expect("sampled kind is active")] += 1;
        }
        let mut worst: f64 = 0.0;
        let mut chi2 = 0.0;
        for (k, &c) in kinds.iter().zip(&counts) {
            let expected = spec.fraction(*k) * n as f64;
            worst = worst.max((c as f64 - expected).abs() / n as f64);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        let p = if kinds.len() > 1 { 1.0 - ChiSquared::new((kinds.len() - 1) as f64).expect("dof > 0").cdf(chi2) } else { 1.0 };
        ok &= worst <= 0.02 && p > 0.01;
        parts.push(format!("row {row}: max dev {:.2}%, p={p:.3}", 100.0 * worst));
    }
    (ok, format!("{n} draws per row; {}", parts.join("; ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suite_passes() {
        for r in run_all(Effort::Quick) {
            assert!(r.passed, "{r}");
        }
    }
}
