//! The `zipmerge` binary: argument validation and a small end-to-end run.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zipmerge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zipmerge")).args(args).current_dir(cwd).env_remove("ZIPMERGE_PPO_N_ENVS").output().unwrap()
}

const SMALL: &str = "\
obs.raster_px=32
obs.meters_per_pixel=2.0
net.channels=4,8,8
net.raster_embed=32
net.vec_hidden=32
net.fusion=32
ppo.n_envs=2
ppo.horizon=8
ppo.batch_size=8
ppo.epochs=1
";

#[test]
fn bad_arguments_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["train"],
        vec!["train", "--out", "x", "--frobnicate"],
        vec!["eval"],
        vec!["eval", "--idm", "--snapshot", "a.zmp"],
        vec!["replay", "--out", "frames"],
        vec!["launch"],
    ] {
        let out = zipmerge(&args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = zipmerge(&["eval", "--snapshot", "missing.zmp"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert!(zipmerge(&["--help"], dir.path()).status.success());
}

#[test]
fn train_eval_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("small.cfg"), SMALL).unwrap();
    let out = zipmerge(&["train", "--config", "small.cfg", "--seed", "3", "--out", "run", "--updates", "1"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.txt", "schedule.txt", "metrics.csv", "zoo/index.txt", "zoo/RL.zmp", "zoo/SP1.zmp", "zoo/SP2.zmp"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_to_string(d.join("run/metrics.csv")).unwrap().lines().count(), 4);

    let out = zipmerge(
        &["eval", "--snapshot", "run/zoo/SP2.zmp", "--population", "popul4", "--trials", "3", "--config", "small.cfg", "--log", "ep.csv", "--trace", "t.csv"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("policy SP2 vs population"));
    assert_eq!(fs::read_to_string(d.join("ep.csv")).unwrap().lines().count(), 4);

    let out = zipmerge(&["replay", "--trace", "t.csv", "--out", "frames", "--meters-per-pixel", "2"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let frames = fs::read_dir(d.join("frames")).unwrap().count();
    let steps = fs::read_to_string(d.join("t.csv")).unwrap().lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect::<std::collections::BTreeSet<_>>().len();
    assert_eq!(frames, steps);

    // A snapshot trained on 32 px observations cannot drive 128 px ones.
    let out = zipmerge(&["eval", "--snapshot", "run/zoo/RL.zmp", "--trials", "1"], d);
    assert_eq!(out.status.code(), Some(2));
}
