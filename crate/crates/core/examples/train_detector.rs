//! Train a detector on windows of packet lengths and score held-out data.
//!
//! Usage: `cargo run --release --example train_detector [seconds] [window]`

use cia_lab::camera::{derive_default_profile, generate_stream, StreamSpec};
use cia_lab::experiment::{run_window, ExperimentConfig};
use cia_lab::gru::write_model;
use cia_lab::switch::{apply_interference, AttackPlan};

fn main() -> cia_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seconds: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let window: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(255);

    let benign = generate_stream(&StreamSpec {
        duration_s: seconds,
        profiles: vec![derive_default_profile()],
        rng_seed: 1,
    })?;
    let attacked = apply_interference(&benign, &AttackPlan::full_capture(seconds), 1)?;
    println!("{} benign + {} attack packets", benign.len(), attacked.len());

    let cfg = ExperimentConfig {
        windows: vec![window],
        ..Default::default()
    };
    let out = run_window(&benign, &attacked, window, &cfg)?;
    for e in &out.history.epochs {
        println!(
            "epoch {:>2}  train loss {:.4}  val loss {:.4}  val acc {:.4}",
            e.epoch,
            e.train_loss,
            e.val_loss.unwrap_or(f64::NAN),
            e.val_accuracy.unwrap_or(f64::NAN)
        );
    }
    let r = &out.report;
    println!(
        "test: {} windows, auc {:.5}, tpr {:.4}, fpr {:.4}, f1 {:.4}, {:.4} ms/window",
        r.total(),
        r.auc.unwrap_or(f64::NAN),
        r.tpr,
        r.fpr,
        r.f1,
        r.inference_time_per_window_s * 1e3
    );
    println!("model file is {} bytes", write_model(&out.detector).len());
    Ok(())
}
