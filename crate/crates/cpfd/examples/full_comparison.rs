//! Run the full teacher / plain / pfd / cpfd comparison over the configured
//! seeds and print the aggregated report.
//!
//! Usage: full_comparison [config-file] [out-dir]

use std::path::Path;

use cpfd::cli::{render_run_report, run_benchmark, ExperimentConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let config = match args.get(1) {
        Some(path) => ExperimentConfig::load(Path::new(path)).expect("config"),
        None => ExperimentConfig::default(),
    };
    let out = args.get(2).map(String::as_str).unwrap_or("runs");
    let report = run_benchmark(&config, Path::new(out)).expect("benchmark");
    print!("{}", render_run_report(&report));
}
