//! PPO on the single-agent straight road: no traffic, a 16 px raster and
//! four environments. Prints the training curve every ten updates.
//!
//! `cargo run --release --example train_straight [-- UPDATES]`

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zipmerge::policy::PolicyParams;
use zipmerge::ppo::{PpoTrainer, VecEnv};
use zipmerge::road::RoadMap;
use zipmerge::selftest::smoke_config;
use zipmerge::sim::{EgoMode, Population, World};

fn main() -> zipmerge::Result<()> {
    let updates: u64 = std::env::args().nth(1).map_or(Ok(100), |s| s.parse()).expect("updates must be an integer");
    let cfg = smoke_config();
    let map = Arc::new(RoadMap::straight_road());
    let envs = (0..cfg.ppo.n_envs)
        .map(|_| World::new(map.clone(), cfg.episode.clone(), Population::idm_only(), EgoMode::External))
        .collect::<zipmerge::Result<Vec<_>>>()?;
    let mut venv = VecEnv::new(envs, 0);
    let params = PolicyParams::init(cfg.net_config(), &mut ChaCha8Rng::seed_from_u64(0));
    let mut trainer = PpoTrainer::new(cfg.ppo.clone(), params, 0)?;

    println!("update  steps  episodes  return  success%  entropy");
    for _ in 0..updates {
        let m = trainer.iterate(&mut venv)?;
        if m.update % 10 == 0 || m.update + 1 == updates {
            let ret = m.mean_return.map_or("-".into(), |r| format!("{r:.1}"));
            println!("{:>6} {:>6} {:>9} {ret:>7} {:>9.1} {:>8.2}", m.update, m.env_steps, m.episodes, m.success_rate, m.entropy);
        }
    }
    Ok(())
}
