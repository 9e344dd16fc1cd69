//! Builds the ego's observation mid-episode: writes the current and faded
//! previous-step raster as a PPM and prints the 76-dim feature vector.
//!
//! `cargo run --release --example observe_raster [-- OUT.ppm]`

use std::fs::File;
use std::io::BufWriter;
use std::sync::Arc;

use zipmerge::road::RoadMap;
use zipmerge::sim::{EgoMode, EpisodeConfig, Population, World};

fn main() -> zipmerge::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "observation.ppm".into());
    let mut world = World::new(Arc::new(RoadMap::zipper_merge()), EpisodeConfig::default(), Population::idm_only(), EgoMode::Idm)?;
    world.reset(3)?;
    for _ in 0..40 {
        if world.step(None)?.done {
            break;
        }
    }
    let ego = world.ego().expect("ego is placed at reset");
    let frame = world.observe(ego.id)?;
    let canvas = &frame.raster.canvas;
    canvas.write_ppm(BufWriter::new(File::create(&out)?))?;
    println!("wrote {}x{} raster at {} m/px to {out}", canvas.width, canvas.height, frame.raster.meters_per_pixel);

    let v = &frame.vector;
    println!("feature vector, {} entries:", v.len());
    for chunk in v.chunks(8) {
        println!("  {}", chunk.iter().map(|x| format!("{x:8.3}")).collect::<String>());
    }
    Ok(())
}
