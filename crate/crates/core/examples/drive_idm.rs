//! One episode on the zipper merge with the rule-based driver in the ego
//! seat, printing the ego's progress and its itemised reward.
//!
//! `cargo run --release --example drive_idm [-- SEED]`

use std::sync::Arc;

use zipmerge::road::RoadMap;
use zipmerge::sim::{EgoMode, EpisodeConfig, Population, RewardLedger, World};

fn main() -> zipmerge::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(7), |s| s.parse()).expect("seed must be an integer");
    let map = Arc::new(RoadMap::zipper_merge());
    let mut world = World::new(map, EpisodeConfig::default(), Population::idm_only(), EgoMode::Idm)?;
    world.reset(seed)?;
    let ego = world.ego().expect("reset places the ego");
    println!("ego {} heads for {} with {} other agents on the road", ego.id, ego.goal, world.live_agents().count() - 1);

    let mut totals = [0.0; 7];
    loop {
        let report = world.step(None)?;
        if let Some(r) = &report.ego_reward {
            for (t, c) in totals.iter_mut().zip(r.components()) {
                *t += c;
            }
        }
        if world.step_index() % 50 == 0 || report.done {
            if let Some(e) = world.ego() {
                let s = &e.state;
                println!("step {:>4}  x {:7.1}  y {:6.1}  v {:5.2} m/s  agents {}", world.step_index(), s.x, s.y, s.v, world.live_agents().count());
            }
        }
        if report.done {
            println!("ego outcome: {}", report.ego_outcome.map_or("none", |o| o.name()));
            break;
        }
    }
    for (name, v) in RewardLedger::COMPONENTS.iter().zip(totals) {
        println!("  {name:<14} {v:9.2}");
    }
    println!("  {:<14} {:9.2}", "total", totals.iter().sum::<f64>());
    Ok(())
}
