//! The shipped three-stage schedule (RL, then SP1, then SP2) with a few
//! updates per stage on the compact network, writing the zoo to a directory.
//!
//! `cargo run --release --example selfplay_stages [-- DIR UPDATES_PER_STAGE]`

use std::path::PathBuf;
use std::sync::Arc;

use zipmerge::road::RoadMap;
use zipmerge::selfplay::{run_selfplay, AgentZoo, StageSchedule, TrainEvent, TrainSetup};
use zipmerge::selftest::compact_config;

fn main() -> zipmerge::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "selfplay_zoo".into()));
    let updates: u64 = args.next().map_or(Ok(3), |s| s.parse()).expect("updates must be an integer");

    let cfg = compact_config();
    let schedule = StageSchedule::default_desk().with_updates(updates);
    print!("{schedule}");
    let setup = TrainSetup { map: Arc::new(RoadMap::zipper_merge()), episode: cfg.episode.clone(), ppo: cfg.ppo.clone(), net: cfg.net_config(), seed: 0 };
    let mut zoo = AgentZoo::open(&dir)?;
    let run = run_selfplay(&schedule, &setup, &mut zoo, |ev| match ev {
        TrainEvent::StageStart { tag, population, .. } => println!("training {tag} against {population}"),
        TrainEvent::Update { metrics: m, .. } => println!("  update {} entropy {:.2} episodes {}", m.update, m.entropy, m.episodes),
        TrainEvent::StageEnd { tag, .. } => println!("  froze {tag}"),
    })?;
    println!("final snapshot {} after {} updates; zoo at {}", run.final_snapshot.meta.tag, run.final_snapshot.meta.update_count, dir.display());
    Ok(())
}
