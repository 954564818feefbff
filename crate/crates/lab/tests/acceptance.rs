//! Runs the acceptance suite and prints one line per criterion.

use std::process::ExitCode;

use isq_lab::acceptance::run_suite;
use isq_lab::ExperimentConfig;

fn main() -> ExitCode {
    let seed = ExperimentConfig::shipped_default().run.master_seed;
    println!("acceptance suite, master seed {seed}");
    let results = run_suite(seed, |_| {});
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            for c in &r.checks {
                println!("    {c}");
            }
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} criteria, {failed} failed", results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
