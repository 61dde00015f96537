use std::path::PathBuf;
use std::process::ExitCode;

use chargeflow::scenario::{self, RunOptions, ScenarioSource};
use clap::Parser;

/// Runs chargeflow scenarios.
///
/// Exit status: 0 success, 2 a falsified acceptance check, 1 an execution error.
/// `CHARGEFLOW_WORKERS` sets the worker-thread count.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Scenario file, or the name of a bundled scenario.
    scenario: Option<PathBuf>,
    /// Output directory (overrides the scenario's).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the scenario's).
    #[arg(long)]
    seed: Option<u64>,
    /// Run every bundled scenario and compare with the golden summaries.
    #[arg(long)]
    verify_all: bool,
    /// List the bundled scenarios.
    #[arg(long)]
    list_scenarios: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Ok(w) = std::env::var("CHARGEFLOW_WORKERS") {
        match w.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: CHARGEFLOW_WORKERS must be a positive integer, got `{w}`");
                return ExitCode::from(1);
            }
        }
    }
    if args.list_scenarios {
        for (name, text) in scenario::BUNDLED_SCENARIOS {
            let desc = scenario::Scenario::parse(text).map(|s| s.description).unwrap_or_default();
            println!("{name:24} {desc}");
        }
        return ExitCode::SUCCESS;
    }
    if args.verify_all {
        let out = args.out.unwrap_or_else(|| PathBuf::from("out"));
        let report = scenario::verify_all(&out, args.seed);
        for s in &report.scenarios {
            let status = match s.exit_code {
                0 => "pass",
                2 => "FAIL",
                _ => "ERROR",
            };
            println!("{status:5} {}", s.name);
            if let Some(e) = &s.error {
                println!("      {e}");
            }
            for d in &s.golden_diffs {
                println!("      golden {d}");
            }
        }
        for (key, spread) in &report.c_consistency {
            println!("C spread {key}: {spread:.3e}");
        }
        for (c, ok) in &report.criteria {
            let label = if *c == 0 { "golden files".to_string() } else { format!("criterion {c}") };
            println!("{label}: {}", if *ok { "pass" } else { "FAIL" });
        }
        return ExitCode::from(report.exit_code() as u8);
    }
    let Some(path) = args.scenario else {
        eprintln!("error: a scenario path is required (or --verify-all / --list-scenarios)");
        return ExitCode::from(1);
    };
    let source = if path.exists() {
        ScenarioSource::load(&path)
    } else {
        ScenarioSource::bundled(&path.to_string_lossy())
    };
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
    };
    match source.and_then(|s| scenario::run(&s, &opts)) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            for (name, q) in summary.failed_checks() {
                eprintln!("check failed: {name} = {} (criterion {})", q.value, q.criterion);
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
