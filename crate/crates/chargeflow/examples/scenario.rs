//! Runs a bundled scenario end to end and prints its checks.

use chargeflow::scenario::{self, RunOptions, ScenarioSource};

fn main() -> chargeflow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "flat-u1-weyl".into());
    let out = std::env::temp_dir().join(format!("chargeflow-{name}"));
    let source = ScenarioSource::bundled(&name)?;
    let summary = scenario::run(
        &source,
        &RunOptions {
            out: Some(out.clone()),
            seed: None,
        },
    )?;
    for (k, q) in &summary.quantities {
        let mark = match q.passed {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "",
        };
        println!("{k:28} {:>16.8e} +- {:.1e}  [{}] {mark}", q.value, q.tolerance, q.criterion);
    }
    println!("artifacts in {}", out.display());
    std::process::exit(summary.exit_code());
}
