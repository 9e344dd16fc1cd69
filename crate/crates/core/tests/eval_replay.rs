//! Evaluation protocol and replay export.

use std::fs;
use std::io::BufReader;
use std::sync::Arc;

use zipmerge::dynamics::{Signal, VehicleState};
use zipmerge::eval::{export_replay, render_replay, trial_seed, EgoDriver, EvalSetup, Evaluator, ReplayStyle, COLLISION_COLOR};
use zipmerge::policy::{PolicyParams, HEAD_OUT};
use zipmerge::road::RoadMap;
use zipmerge::selfplay::{AgentZoo, PopulationSpec};
use zipmerge::selftest::compact_config;
use zipmerge::sim::{read_trace, write_trace, AgentKind, EpisodeConfig, Outcome, TraceRow};

fn setup(episode: EpisodeConfig) -> EvalSetup {
    EvalSetup { map: Arc::new(RoadMap::zipper_merge()), episode, population: PopulationSpec::table_row(1).unwrap(), zoo: AgentZoo::in_memory() }
}

/// A network that ignores its input and always steers and accelerates at the limit.
fn hard_left_policy() -> EgoDriver {
    let mut params = PolicyParams::zeros(compact_config().net_config());
    let n = params.data.len();
    let head_bias = &mut params.data[n - HEAD_OUT..];
    head_bias[0] = 8.0; // steer mean, pre-squash
    head_bias[2] = 8.0; // accel mean, pre-squash
    EgoDriver::Policy { tag: "STUB".into(), params: Arc::new(params) }
}

#[test]
fn saturated_steering_always_leaves_the_road() {
    let mut episode = compact_config().episode;
    episode.n_other_agents_max = 0;
    episode.warmup_steps = 0;
    let report = Evaluator::new(&setup(episode), hard_left_policy()).unwrap().run(40, 1).unwrap();
    assert_eq!(report.oob_rate, 100.0, "{report}");
    assert_eq!(report.n_trials, 40);
}

#[test]
fn evaluation_is_reproducible_and_rates_match_the_log() {
    let episode = EpisodeConfig { max_steps: 400, ..compact_config().episode };
    let ev = Evaluator::new(&setup(episode), EgoDriver::Idm).unwrap();
    let a = ev.run(20, 9).unwrap();
    let b = ev.run(20, 9).unwrap();
    assert_eq!(a, b);
    let sum = a.success_rate + a.collision_rate + a.oob_rate + a.timeout_rate;
    assert!((sum - 100.0).abs() < 1e-9);

    let mut log = Vec::new();
    a.write_episode_log(&mut log).unwrap();
    let text = String::from_utf8(log).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("trial,seed,outcome,return,steps"));
    let outcomes: Vec<Outcome> = lines.map(|l| Outcome::from_name(l.split(',').nth(2).unwrap()).unwrap()).collect();
    assert_eq!(outcomes.len(), 20);
    let pct = |o: Outcome| 100.0 * outcomes.iter().filter(|&&x| x == o).count() as f64 / 20.0;
    assert_eq!(pct(Outcome::Success), a.success_rate);
    assert_eq!(pct(Outcome::Collision), a.collision_rate);
    assert_eq!(pct(Outcome::OutOfBounds), a.oob_rate);
    assert_eq!(pct(Outcome::Timeout), a.timeout_rate);

    // The traced replay of each trial ends with the logged ego outcome.
    for rec in a.episodes.iter().take(5) {
        let (again, rows) = ev.run_trial(rec.trial, trial_seed(9, rec.trial), true).unwrap();
        assert_eq!(&again, rec);
        let mut csv = Vec::new();
        write_trace(&rows, &mut csv).unwrap();
        let back = read_trace(BufReader::new(&csv[..])).unwrap();
        assert_eq!(back, rows);
        let ego_end = back.iter().rev().find(|r| r.kind == AgentKind::EgoLearner).unwrap();
        assert_eq!(ego_end.outcome, Some(rec.outcome));
    }
}

#[test]
fn mismatched_snapshot_is_rejected() {
    let mut params = PolicyParams::zeros(compact_config().net_config());
    params.config.raster_px = 64;
    let ego = EgoDriver::Policy { tag: "X".into(), params: Arc::new(params) };
    assert!(Evaluator::new(&setup(EpisodeConfig::default()), ego).is_err());
}

fn row(step: u64, id: u32, x: f64, outcome: Option<Outcome>) -> TraceRow {
    TraceRow {
        step,
        id,
        kind: if id == 0 { AgentKind::EgoLearner } else { AgentKind::Idm },
        state: VehicleState::new(x, 0.0, 0.0, 5.0),
        length: 4.5,
        width: 1.8,
        accel: 0.0,
        steer: 0.0,
        signal: Signal::Off,
        reward: None,
        outcome,
    }
}

#[test]
fn replay_writes_one_identical_frame_per_step() {
    let map = RoadMap::straight_road();
    let trace: Vec<TraceRow> = (1..=10).flat_map(|s| [row(s, 0, s as f64 * 2.0, None), row(s, 3, 30.0 + s as f64, None)]).collect();
    let style = ReplayStyle { meters_per_pixel: 1.0, ..ReplayStyle::default() };
    let dir = tempfile::tempdir().unwrap();
    let first = export_replay(&map, &trace, &style, &dir.path().join("a")).unwrap();
    let second = export_replay(&map, &trace, &style, &dir.path().join("b")).unwrap();
    assert_eq!(first.len(), 10);
    for (p, q) in first.iter().zip(&second) {
        let bytes = fs::read(p).unwrap();
        assert!(bytes.starts_with(b"P6\n"));
        assert_eq!(bytes, fs::read(q).unwrap());
    }
}

#[test]
fn collisions_are_painted_in_the_collision_colour() {
    let map = RoadMap::straight_road();
    let mut trace = vec![row(1, 0, 20.0, None), row(1, 3, 30.0, None)];
    trace.extend([row(2, 0, 25.0, Some(Outcome::Collision)), row(2, 3, 27.0, Some(Outcome::Collision))]);
    let style = ReplayStyle { meters_per_pixel: 0.5, labels: false, ..ReplayStyle::default() };
    let frames = render_replay(&map, &trace, &style);
    let has = |k: usize| {
        let f = &frames[k];
        (0..f.height).any(|r| (0..f.width).any(|c| f.pixel(r, c) == COLLISION_COLOR))
    };
    assert!(!has(0));
    assert!(has(1));
}
