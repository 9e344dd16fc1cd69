//! Runs every oracle check at full size and prints one line per check.
//!
//! `cargo run --release --example oracle_suite [-- --quick]`

use zipmerge::selftest::{run_all, Effort};

fn main() {
    let effort = if std::env::args().any(|a| a == "--quick") { Effort::Quick } else { Effort::Full };
    let results = run_all(effort);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    std::process::exit(i32::from(failed > 0));
}
