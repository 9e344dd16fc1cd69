//! Records one traced evaluation trial, writes the trace CSV, and renders
//! it to one PPM frame per step.
//!
//! `cargo run --release --example replay_export [-- OUT_DIR]`

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use zipmerge::eval::{export_replay, trial_seed, EgoDriver, EvalSetup, Evaluator, ReplayStyle};
use zipmerge::road::RoadMap;
use zipmerge::selfplay::{AgentZoo, PopulationSpec};
use zipmerge::sim::{write_trace, EpisodeConfig};

fn main() -> zipmerge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "replay".into()));
    let map = Arc::new(RoadMap::zipper_merge());
    let setup = EvalSetup { map: map.clone(), episode: EpisodeConfig::default(), population: PopulationSpec::table_row(1)?, zoo: AgentZoo::in_memory() };
    let (record, rows) = Evaluator::new(&setup, EgoDriver::Idm)?.run_trial(0, trial_seed(0, 0), true)?;
    println!("trial ended in {} after {} steps", record.outcome.name(), record.steps);

    fs::create_dir_all(&out)?;
    write_trace(&rows, BufWriter::new(File::create(out.join("trace.csv"))?))?;
    let style = ReplayStyle { meters_per_pixel: 1.0, ..ReplayStyle::default() };
    let frames = export_replay(&map, &rows, &style, &out.join("frames"))?;
    println!("{} trace rows, {} frames in {}", rows.len(), frames.len(), out.join("frames").display());
    Ok(())
}
