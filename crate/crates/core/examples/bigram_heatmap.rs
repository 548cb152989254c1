//! Compare adjacent packet-length pairs with and without interference and
//! export both histograms for plotting.
//!
//! Usage: `cargo run --release --example bigram_heatmap [out_dir]`

use std::path::PathBuf;

use cia_lab::camera::{derive_default_profile, generate_stream, StreamSpec};
use cia_lab::features::{bigram_histogram, BigramHistogram};
use cia_lab::switch::{apply_interference, AttackPlan};

fn top(h: &BigramHistogram, n: usize) -> Vec<((u16, u16), u64)> {
    let mut all: Vec<_> = h.iter().collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(n);
    all
}

fn main() -> cia_lab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "heatmap-demo".into()));
    std::fs::create_dir_all(&dir).map_err(|e| cia_lab::Error::InvalidArgument(e.to_string()))?;

    let benign = generate_stream(&StreamSpec {
        duration_s: 10.0,
        profiles: vec![derive_default_profile()],
        rng_seed: 21,
    })?;
    let attacked = apply_interference(&benign, &AttackPlan::full_capture(10.0), 22)?;

    for (name, cap) in [("benign", &benign), ("attack", &attacked)] {
        let h = bigram_histogram(cap)?;
        let out = dir.join(format!("{name}_bigrams.csv"));
        h.save_csv(&out)?;
        println!("{name}: {} distinct pairs -> {}", h.distinct(), out.display());
        for ((a, b), count) in top(&h, 3) {
            println!("  ({a:>4}, {b:>4}) x {count}");
        }
    }
    let hb = bigram_histogram(&benign)?;
    let ha = bigram_histogram(&attacked)?;
    let full_after_full = |h: &BigramHistogram| h.get(1474, 1474);
    println!(
        "back-to-back full fragments: {} benign, {} attack",
        full_after_full(&hb),
        full_after_full(&ha)
    );
    Ok(())
}
