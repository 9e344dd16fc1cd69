//! Success, collision and out-of-bounds rates over fixed trial seeds.
//! Without arguments the rule-based driver is measured against the all-IDM
//! population; pass a snapshot (and optionally a population) to measure a
//! trained policy. Observation settings must match the snapshot's and are
//! read from `ZIPMERGE_*` variables, as in the command line tool.
//!
//! `ZIPMERGE_OBS_RASTER_PX=32 ZIPMERGE_OBS_METERS_PER_PIXEL=2 cargo run --release --example evaluate -- run/zoo/RL.zmp popul1 100`

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use zipmerge::config::TrainConfig;
use zipmerge::eval::{EgoDriver, EvalSetup, Evaluator};
use zipmerge::policy::load_snapshot;
use zipmerge::road::RoadMap;
use zipmerge::selfplay::{AgentZoo, INDEX_FILE};

fn main() -> zipmerge::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = TrainConfig::default();
    cfg.apply_env(std::env::vars())?;
    let (ego, zoo) = match args.first() {
        Some(path) => {
            let snap = load_snapshot(BufReader::new(File::open(path)?))?;
            let dir = Path::new(path).parent().filter(|d| d.join(INDEX_FILE).exists());
            let zoo = dir.map_or_else(|| Ok(AgentZoo::in_memory()), AgentZoo::open)?;
            (EgoDriver::Policy { tag: snap.meta.tag.clone(), params: Arc::new(snap.params) }, zoo)
        }
        None => (EgoDriver::Idm, AgentZoo::in_memory()),
    };
    let population = args.get(1).map_or("popul1", String::as_str).parse()?;
    let trials = args.get(2).map_or(Ok(100), |s| s.parse()).expect("trials must be an integer");
    let setup = EvalSetup { map: Arc::new(RoadMap::zipper_merge()), episode: cfg.episode, population, zoo };
    let report = Evaluator::new(&setup, ego)?.run(trials, 0)?;
    println!("{report}");
    Ok(())
}
