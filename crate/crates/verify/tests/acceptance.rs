//! Runs every acceptance criterion and prints one line per criterion.
//! `ACCEPTANCE_ONLY=1,2,3` restricts the run.

use std::process::ExitCode;

fn main() -> ExitCode {
    let _ = env_logger::builder().is_test(true).try_init();
    let ids: Vec<u32> = match std::env::var("ACCEPTANCE_ONLY") {
        Ok(s) => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        Err(_) => thermocloak_verify::ALL.to_vec(),
    };
    // `cargo test -- --list` and friends
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let outcomes = thermocloak_verify::run(&ids, |o| println!("{o}"));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
