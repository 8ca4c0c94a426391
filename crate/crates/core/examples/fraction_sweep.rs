//! Runs the pruning-fraction sweep from the bundled config: a toxicity-biased
//! n-gram model decodes every prompt with 0%, 25%, 50%, 75% and 100% of the
//! toxic subwords pruned.
//!
//! ```bash
//! cargo run -p toxprune --release --example fraction_sweep -- [out_dir]
//! ```

use std::path::PathBuf;

use toxprune::cli::{cmd_sweep, summary_csv, ExperimentConfig};
use toxprune::data_dir;

fn main() -> toxprune::Result<()> {
    let mut cfg = ExperimentConfig::load(data_dir().join("sweep.json"))?;
    if let Some(out) = std::env::args().nth(1) {
        cfg.out_dir = PathBuf::from(out);
    }
    let rows = cmd_sweep(&cfg)?;
    println!("fraction  pruned ids  word coverage  toxicity  D-1    D-2");
    for row in &rows {
        println!(
            "{:>8.2}  {:>10}  {:>13.3}  {:>8.3}  {:.3}  {:.3}",
            row.fraction,
            row.pruned_ids,
            row.coverage,
            row.report.toxicity_rate,
            row.report.distinct_1,
            row.report.distinct_2
        );
    }
    println!("\n{}", summary_csv(&rows));
    println!(
        "per-fraction generations and reports in {}",
        cfg.out_dir.display()
    );
    Ok(())
}
