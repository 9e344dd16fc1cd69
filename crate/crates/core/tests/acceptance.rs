//! Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
//! failed. Built without the test harness so the lines always print.
//!
//! The directional self-play comparison takes several minutes and only runs
//! with `cargo test --release --test acceptance -- --ignored`.

use std::time::Instant;

use zipmerge::selftest::{self, compact_config, learning_smoke, run_check, stub_schedule_artifacts, throughput, Effort};

struct Line {
    name: &'static str,
    passed: bool,
    seconds: f64,
    detail: String,
}

impl Line {
    fn print(&self) {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<22} {:>7.2} s  {}", self.name, self.seconds, self.detail);
    }
}

/// Runs `f`, failing the criterion when it errs or exceeds `budget` seconds.
fn criterion(name: &'static str, budget: f64, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (ok, detail) = f();
    let seconds = t.elapsed().as_secs_f64();
    let within = seconds < budget;
    let detail = if within { detail } else { format!("{detail}; over the {budget} s budget") };
    let line = Line { name, passed: ok && within, seconds, detail };
    line.print();
    line
}

fn oracle(name: &'static str, budget: f64) -> Line {
    criterion(name, budget, || {
        let r = run_check(name, Effort::Full).expect("known check");
        (r.passed, r.detail)
    })
}

fn determinism() -> (bool, String) {
    let cfg = compact_config();
    let dir = tempfile::tempdir().expect("temp dir");
    let run = |k: &str| stub_schedule_artifacts(&cfg, 2024, 2, &dir.path().join(k));
    match (run("a"), run("b")) {
        (Ok(a), Ok(b)) => {
            let names: Vec<&str> = a.files.iter().map(|(n, _)| n.as_str()).collect();
            let differing: Vec<&str> = a.files.iter().zip(&b.files).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
            let ok = a.files.len() == b.files.len() && differing.is_empty() && names.contains(&"zoo/SP2.zmp");
            (ok, format!("files {names:?}; differing {differing:?}"))
        }
        (Err(e), _) | (_, Err(e)) => (false, format!("run failed: {e}")),
    }
}

fn learning() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in 0..3 {
        match learning_smoke(seed, 200) {
            Ok((before, after)) => {
                ok &= after > before;
                parts.push(format!("seed {seed}: {before:.1} -> {after:.1}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("seed {seed}: {e}"));
            }
        }
    }
    (ok, parts.join("; "))
}

fn throughput_budget() -> (bool, String) {
    match throughput(20_000) {
        Ok(t) => {
            let sps = t.steps_per_second();
            (sps >= 2000.0, format!("{sps:.0} env-steps/s with {:.1} live agents on average", t.mean_agents))
        }
        Err(e) => (false, e.to_string()),
    }
}

fn directional() -> (bool, String) {
    match selftest::directional_selfplay(&selftest::directional_config(), 500, 250, 0, |_| {}) {
        Ok(r) => (
            r.trained_success > r.baseline_success,
            format!("IDM baseline {:.1}% vs trained {:.1}% over {} trials after {} updates", r.baseline_success, r.trained_success, r.trials, r.updates),
        ),
        Err(e) => (false, e.to_string()),
    }
}

fn main() {
    let long = std::env::args().any(|a| a == "--ignored" || a == "--include-ignored");
    let mut lines = vec![
        oracle("dynamics_circle", 1.0),
        oracle("control_clamping", 1.0),
        oracle("idm_safety", 5.0),
        oracle("collision_sampling", 30.0),
        oracle("reward_ledger", 1.0),
        oracle("gae_identities", 1.0),
        oracle("gradient_check", 60.0),
        oracle("clip_semantics", 1.0),
        oracle("observation_contracts", 10.0),
        oracle("population_sampling", 1.0),
        criterion("determinism", 300.0, determinism),
        criterion("learning_smoke", 900.0, learning),
        criterion("throughput", 60.0, throughput_budget),
    ];
    if long {
        lines.push(criterion("directional_selfplay", 4.0 * 3600.0, directional));
    } else {
        println!("SKIP directional_selfplay   optional and long; pass --ignored to run it");
    }
    let failed: Vec<&str> = lines.iter().filter(|l| !l.passed).map(|l| l.name).collect();
    if failed.is_empty() {
        println!("acceptance: {} criteria passed", lines.len());
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
