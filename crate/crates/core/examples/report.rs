//! Paired run rendered to CSVs and SVG plots.
//!
//! `cargo run --release --example report -- OUT_DIR [seed]`

use std::path::PathBuf;

use goldilocks::harness::{compare_runs, emit_report, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "report".into()));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cfg = ExperimentConfig::default().with_seed(seed);
    let run = compare_runs(&cfg, 500)?;
    for path in emit_report(&run.goldilocks.records, &run.baseline.records, &out, cfg.ema_alpha)? {
        println!("{}", path.display());
    }
    println!("{}", serde_json::to_string_pretty(&run.summary)?);
    Ok(())
}
