//! Saves a freshly initialised policy, loads it back, and shows that a
//! flipped byte is caught by the checksum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zipmerge::config::TrainConfig;
use zipmerge::policy::{load_snapshot, save_snapshot, PolicyParams, SnapshotMeta};

fn main() -> zipmerge::Result<()> {
    let cfg = TrainConfig::default();
    let mut params = PolicyParams::init(cfg.net_config(), &mut ChaCha8Rng::seed_from_u64(1));
    // Snapshots store f32; quantising first makes the round trip exact.
    params.quantize();
    let meta = SnapshotMeta { tag: "RL".into(), update_count: 0, seed: 1, ..Default::default() };

    let mut bytes = Vec::new();
    save_snapshot(&params, &meta, &mut bytes)?;
    println!("{} parameters, {} bytes on disk", params.len(), bytes.len());

    let back = load_snapshot(&bytes[..])?;
    assert_eq!(back.params, params);
    assert_eq!(back.meta, meta);
    println!("round trip exact: tag {} after {} updates", back.meta.tag, back.meta.update_count);

    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    match load_snapshot(&bytes[..]) {
        Err(e) => println!("corrupted copy rejected: {e}"),
        Ok(_) => unreachable!("checksum missed a flipped byte"),
    }
    Ok(())
}
