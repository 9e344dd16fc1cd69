//! Property tests for the invariants each module promises.

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zipmerge::dynamics::{step, ControlInput, Signal, VehicleGeometry, VehicleState};
use zipmerge::geometry::{sample_polyline, Vec2};
use zipmerge::idm::{gap_accept, idm_accel, IdmParams};
use zipmerge::observation::{encode_vector, nearest_neighbors, rasterize, ObservationSpec};
use zipmerge::policy::{entropy, evaluate, NetConfig, LOG_STD_MAX, LOG_STD_MIN};
use zipmerge::ppo::{clip_grad_norm, clipped_surrogate, compute_gae, normalize_advantages};
use zipmerge::road::{project_to_lane, Clothoid, Label, RoadMap};
use zipmerge::selftest::{lively_params, random_frame, random_scene};
use zipmerge::sim::{AgentKind, EgoMode, EpisodeConfig, OrientedBox, Outcome, Population, World, MAX_OTHER_AGENTS};

fn zipper() -> Arc<RoadMap> {
    Arc::new(RoadMap::zipper_merge())
}

// ---------------------------------------------------------------- road

proptest! {
    #[test]
    fn projection_distance_matches_foot_point(lane_pick in 0usize..64, fx in 0.0..1.0f64, fy in 0.0..1.0f64) {
        let map = zipper();
        let lanes: Vec<_> = map.lanes().collect();
        let lane = lanes[lane_pick % lanes.len()];
        let b = lane.bounds().inflate(10.0);
        let p = Vec2::new(b.min.x + fx * (b.max.x - b.min.x), b.min.y + fy * (b.max.y - b.min.y));
        let (s, d) = project_to_lane(p, lane);
        let (foot, _) = sample_polyline(&lane.centerline, lane.arc_lengths(), s);
        prop_assert!((p.distance(foot) - d.abs()).abs() < 1e-9);
    }

    #[test]
    fn moving_away_from_every_lane_stays_out_of_bounds(fx in 0.0..1.0f64, fy in 0.0..1.0f64, ang in 0.0..6.3f64, step_len in 0.1..20.0f64) {
        let map = zipper();
        let e = map.extent().inflate(20.0);
        let p = Vec2::new(e.min.x + fx * (e.max.x - e.min.x), e.min.y + fy * (e.max.y - e.min.y));
        let q = p + Vec2::from_angle(ang) * step_len;
        let farther = map.lanes().all(|l| l.project(q).1.abs() >= l.project(p).1.abs());
        if map.is_out_of_bounds(p) && farther {
            prop_assert!(map.is_out_of_bounds(q));
        }
    }

    #[test]
    fn routing_is_seeded_and_connected(seed in any::<u64>(), start in 0usize..3) {
        let map = zipper();
        let start = Label::SPAWNS[start];
        for goal in map.reachable_goals(start) {
            let a = map.plan_route(start, goal, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = map.plan_route(start, goal, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(map.lane(a.lane_ids[0]).unwrap().label, Some(start));
            prop_assert_eq!(map.lane(a.last_lane()).unwrap().label, Some(goal));
            for w in a.lane_ids.windows(2) {
                prop_assert!(map.lane(w[0]).unwrap().successors.contains(&w[1]));
            }
            for w in a.reference_path.windows(2) {
                prop_assert!(w[0].distance(w[1]) <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn tessellation_refines_first_order(k0 in -0.05..0.05f64, k_rate in -0.002..0.002f64, cells in 4usize..80, heading in -3.1..3.1f64) {
        let step_len = 0.5;
        let c = Clothoid { start: Vec2::new(3.0, -2.0), heading, k0, k_rate, length: cells as f64 * step_len };
        let coarse = c.tessellate(step_len);
        let fine = c.tessellate(step_len / 2.0);
        prop_assert_eq!(fine.len(), 2 * coarse.len() - 1);
        let k_max = k0.abs().max((k0 + k_rate * c.length).abs()).max(1e-12);
        for (i, p) in coarse.iter().enumerate() {
            prop_assert!(p.distance(fine[2 * i]) < step_len * step_len * k_max);
        }
    }
}

// ---------------------------------------------------------------- dynamics

/// Max position error of `dt` integration against a `1e-4` reference.
fn euler_error(dt: f64) -> f64 {
    let g = VehicleGeometry::default();
    let control = |t: f64| ControlInput::new(0.5 * (0.7 * t).sin(), 0.2 * (0.3 * t).cos(), Signal::Off);
    let run = |h: f64, sample_every: usize| {
        let mut s = VehicleState::new(0.0, 0.0, 0.1, 8.0);
        let mut out = vec![s.position()];
        let n = (5.0 / h).round() as usize;
        for k in 0..n {
            s = step(&s, &control(k as f64 * h), &g, h);
            if (k + 1) % sample_every == 0 {
                out.push(s.position());
            }
        }
        out
    };
    // Controls are piecewise constant on the coarse grid, so the reference
    // holds each one for the same interval.
    let coarse = run(dt, 1);
    let sub = (dt / 1e-4).round() as usize;
    let g2 = VehicleGeometry::default();
    let mut s = VehicleState::new(0.0, 0.0, 0.1, 8.0);
    let mut worst: f64 = 0.0;
    for (k, p) in coarse.iter().enumerate().skip(1) {
        let c = control((k - 1) as f64 * dt);
        for _ in 0..sub {
            s = step(&s, &c, &g2, 1e-4);
        }
        worst = worst.max(p.distance(s.position()));
    }
    worst
}

#[test]
fn euler_error_is_first_order() {
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| euler_error(dt)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=2.5).contains(&ratio), "errors {e:?}");
    }
}

// ---------------------------------------------------------------- IDM

proptest! {
    #[test]
    fn gap_acceptance_is_monotone(lead in 0.0..60.0f64, lag in 0.0..60.0f64, dl in 0.0..20.0f64, dg in 0.0..20.0f64,
                                  lead_dv in -10.0..10.0f64, lag_dv in -10.0..10.0f64) {
        let p = IdmParams::default();
        if gap_accept(lead, lag, lead_dv, lag_dv, &p) {
            prop_assert!(gap_accept(lead + dl, lag, lead_dv, lag_dv, &p));
            prop_assert!(gap_accept(lead, lag + dg, lead_dv, lag_dv, &p));
        }
    }
}

#[test]
fn platoon_behind_oscillating_leader_never_collides() {
    let g = VehicleGeometry::default();
    let p = IdmParams { v0: 15.0, ..IdmParams::default() };
    // Leader plus five followers on a straight line, 25 m apart.
    let mut cars: Vec<VehicleState> = (0..6).map(|i| VehicleState::new(-25.0 * i as f64, 0.0, 0.0, 10.0)).collect();
    let dt = 0.1;
    for k in 0..1200 {
        let t = k as f64 * dt;
        let mut controls = vec![ControlInput::new((0.5 * t).sin(), 0.0, Signal::Off)];
        for i in 1..cars.len() {
            let gap = cars[i - 1].x - cars[i].x - g.length;
            let dv = cars[i].v - cars[i - 1].v;
            controls.push(ControlInput::new(idm_accel(cars[i].v, dv, gap, &p).clamp(-6.0, 4.0), 0.0, Signal::Off));
        }
        for (c, u) in cars.iter_mut().zip(&controls) {
            *c = step(c, u, &g, dt);
        }
        for i in 1..cars.len() {
            let gap = cars[i - 1].x - cars[i].x - g.length;
            assert!(gap > 0.0, "follower {i} hit its leader at t={t:.1} (gap {gap:.3})");
        }
    }
}

// ---------------------------------------------------------------- simulation

fn busy_config() -> EpisodeConfig {
    EpisodeConfig { spawn_prob: 0.3, max_steps: 300, warmup_steps: 20, ..EpisodeConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn episode_invariants(seed in any::<u64>()) {
        let mut w = World::new(zipper(), busy_config(), Population::idm_only(), EgoMode::Idm).unwrap();
        w.record_trace(true);
        w.reset(seed).unwrap();
        let mut total = 0.0;
        let mut streams = [0.0; 7];
        loop {
            let rep = w.step(None).unwrap();
            let live_others = w.live_agents().filter(|a| a.kind != AgentKind::EgoLearner).count();
            prop_assert!(live_others <= MAX_OTHER_AGENTS);
            prop_assert!(w.step_index() <= w.config().max_steps);
            for &(a, b) in &rep.collisions {
                let (ba, bb) = (w.agent(a).unwrap().obb(), w.agent(b).unwrap().obb());
                prop_assert!(ba.intersects(&bb) && bb.intersects(&ba));
            }
            if let Some(r) = rep.ego_reward {
                total += r.total();
                for (s, c) in streams.iter_mut().zip(r.components()) {
                    *s += c;
                }
            }
            if rep.done {
                break;
            }
        }
        // Summation order differs between the two, so allow rounding only.
        prop_assert!((total - streams.iter().sum::<f64>()).abs() <= 1e-9 * (1.0 + total.abs()));

        // Every agent ends with exactly one outcome and leaves the trace after it.
        let mut last_row: BTreeMap<u32, (u64, Option<Outcome>)> = BTreeMap::new();
        let mut outcomes: BTreeMap<u32, usize> = BTreeMap::new();
        for r in w.trace() {
            if let Some((step, o)) = last_row.get(&r.id) {
                prop_assert!(o.is_none(), "agent {} moved after its outcome", r.id);
                prop_assert!(*step < r.step);
            }
            last_row.insert(r.id, (r.step, r.outcome));
            if r.outcome.is_some() {
                *outcomes.entry(r.id).or_default() += 1;
            }
        }
        for a in w.agents() {
            prop_assert!(!a.alive && a.outcome.is_some(), "agent {} open at episode end", a.id);
        }
        for (id, n) in outcomes {
            prop_assert_eq!(n, 1, "agent {}", id);
        }
    }

    #[test]
    fn same_seed_and_actions_give_the_same_trace(seed in any::<u64>()) {
        let run = || {
            let mut w = World::new(zipper(), busy_config(), Population::idm_only(), EgoMode::External).unwrap();
            w.record_trace(true);
            w.reset(seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5);
            loop {
                let a = ControlInput::new(rng.random_range(-2.0..2.0), rng.random_range(-0.05..0.05), Signal::Off);
                if w.step(Some(a)).unwrap().done {
                    break;
                }
            }
            w.trace().to_vec()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn collision_test_is_symmetric(ax in -5.0..5.0f64, ay in -3.0..3.0f64, ah in -3.2..3.2f64, bh in -3.2..3.2f64,
                                   al in 1.0..6.0f64, aw in 0.5..3.0f64, bl in 1.0..6.0f64, bw in 0.5..3.0f64) {
        let a = OrientedBox::new(Vec2::new(ax, ay), ah, al, aw);
        let b = OrientedBox::new(Vec2::ZERO, bh, bl, bw);
        prop_assert_eq!(a.intersects(&b), b.intersects(&a));
    }
}

#[test]
fn population_cap_is_enforced() {
    let c = EpisodeConfig { n_other_agents_max: MAX_OTHER_AGENTS + 1, ..EpisodeConfig::default() };
    assert!(c.validate().is_err());
}

// ---------------------------------------------------------------- observation

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vector_is_always_76_long(seed in any::<u64>(), others in 0usize..20) {
        let map = zipper();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (agents, _) = random_scene(&map, others, &mut rng);
        let spec = ObservationSpec::default();
        for me in agents.iter().filter(|a| a.alive) {
            prop_assert_eq!(encode_vector(&agents, me, &spec).len(), 76);
        }
    }

    #[test]
    fn equidistant_neighbours_order_by_id(seed in any::<u64>(), n in 2usize..12, r in 5.0..40.0f64) {
        let map = zipper();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut agents, _) = random_scene(&map, n, &mut rng);
        prop_assume!(agents.len() >= 2);
        let centre = agents[0].state.position();
        let m = agents.len() - 1;
        for (k, a) in agents.iter_mut().skip(1).enumerate() {
            // Exact ±r offsets along the axes keep every distance bit-identical.
            let off = [Vec2::new(r, 0.0), Vec2::new(-r, 0.0), Vec2::new(0.0, r), Vec2::new(0.0, -r)][k % 4];
            let p = centre + off;
            a.state.x = p.x;
            a.state.y = p.y;
            a.alive = true;
        }
        let ids: Vec<u32> = {
            let mut v: Vec<u32> = agents[1..].iter().filter(|a| a.state.position().distance(centre) == r).map(|a| a.id).collect();
            v.sort();
            v
        };
        let me = agents[0].clone();
        let got: Vec<u32> = nearest_neighbors(&agents, &me, m).iter().filter(|a| a.state.position().distance(centre) == r).map(|a| a.id).collect();
        prop_assert_eq!(got, ids);
    }

    #[test]
    fn every_vehicle_in_the_window_shows(seed in any::<u64>(), dx in -28.0..28.0f64, dy in -28.0..28.0f64, psi in -3.2..3.2f64) {
        let map = zipper();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (agents, _) = random_scene(&map, 1, &mut rng);
        prop_assume!(agents.len() >= 2);
        prop_assume!(dx.abs() > 6.0 || dy.abs() > 6.0);
        let me = agents[0].clone();
        let mut other = agents[1].clone();
        let p = me.state.position() + Vec2::new(dx, dy);
        other.state.x = p.x;
        other.state.y = p.y;
        other.state.psi = psi;
        other.prev_state = None;
        other.alive = true;
        let mut me_only = me.clone();
        me_only.prev_state = None;
        let spec = ObservationSpec::default();
        let without = rasterize(&map, std::slice::from_ref(&me_only), &me_only, &spec);
        let with = rasterize(&map, &[me_only.clone(), other], &me_only, &spec);
        prop_assert!(with.canvas != without.canvas);
    }
}

// ---------------------------------------------------------------- policy

#[test]
fn value_is_finite_and_entropy_is_bounded() {
    let cfg = NetConfig::micro();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gauss = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    let lo = 2.0 * (gauss + LOG_STD_MIN);
    let hi = 2.0 * (gauss + LOG_STD_MAX) + 3f64.ln();
    for k in 0..200 {
        let mut params = lively_params(cfg, &mut rng);
        // Large weights push the log-std heads far past both clamps.
        for x in &mut params.data {
            *x *= 1.0 + (k % 7) as f64;
        }
        let mut frame = random_frame(&cfg, &mut rng);
        for v in &mut frame.vector {
            *v *= 1e3;
        }
        let (d, _) = evaluate(&params, &frame).unwrap();
        assert!(d.value.is_finite());
        let h = entropy(&d);
        assert!(h >= lo - 1e-12 && h <= hi + 1e-12, "entropy {h} outside [{lo}, {hi}]");
    }
}

// ---------------------------------------------------------------- PPO

proptest! {
    #[test]
    fn clipped_surrogate_never_exceeds_unclipped(ratio in 0.0..3.0f64, adv in -5.0..5.0f64, eps in 0.01..0.99f64) {
        let (s, _) = clipped_surrogate(ratio, adv, eps);
        prop_assert!(s <= ratio * adv + 1e-15);
    }

    #[test]
    fn normalized_advantages_have_unit_moments(xs in prop::collection::vec(-100.0..100.0f64, 2..200)) {
        let mut a = xs.clone();
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-6);
        prop_assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn undiscounted_gae_with_zero_values_is_reward_to_go(rs in prop::collection::vec(-10.0..10.0f64, 1..60), cut in 0usize..60) {
        let n = rs.len();
        let mut dones = vec![false; n];
        dones[cut % n] = true;
        dones[n - 1] = true;
        let (adv, _) = compute_gae(&rs, &vec![0.0; n], &dones, 123.0, 1.0, 1.0);
        let mut acc = 0.0;
        for t in (0..n).rev() {
            if dones[t] {
                acc = 0.0;
            }
            acc += rs[t];
            prop_assert!((adv[t] - acc).abs() < 1e-9);
        }
    }

    #[test]
    fn clipped_gradient_norm_is_bounded(g in prop::collection::vec(-1e3..1e3f64, 1..100), max in 0.01..10.0f64) {
        let mut g = g;
        clip_grad_norm(&mut g, max);
        prop_assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= max + 1e-9);
    }
}
