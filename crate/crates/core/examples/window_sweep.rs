//! Retrain and evaluate once per window size and print the sweep table.
//!
//! Usage: `cargo run --release --example window_sweep [seconds] [out_dir]`

use cia_lab::camera::{derive_default_profile, generate_stream, StreamSpec};
use cia_lab::experiment::{run_experiment, save_artifacts, write_sweep_csv, ExperimentConfig};
use cia_lab::switch::{apply_interference, AttackPlan};

fn main() -> cia_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seconds: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5.0);
    let dir = args.next().unwrap_or_else(|| "sweep-demo".into());

    let benign = generate_stream(&StreamSpec {
        duration_s: seconds,
        profiles: vec![derive_default_profile()],
        rng_seed: 7,
    })?;
    let attacked = apply_interference(&benign, &AttackPlan::full_capture(seconds), 7)?;
    let outcomes = run_experiment(&benign, &attacked, &ExperimentConfig::default())?;
    write_sweep_csv(&outcomes, std::io::stdout()).expect("stdout");
    save_artifacts(&outcomes, &dir)?;
    println!("sweep.csv, roc.csv and report.json written to {dir}");
    Ok(())
}
