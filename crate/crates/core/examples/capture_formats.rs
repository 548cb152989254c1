//! Write a capture as CSV and pcap, then read the CSV back.
//!
//! Usage: `cargo run --example capture_formats [out_dir]`

use std::path::PathBuf;

use cia_lab::camera::{derive_default_profile, generate_stream, StreamSpec};
use cia_lab::capture::{export_pcap, meta_path, read_csv, write_csv};

fn main() -> cia_lab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "capture-demo".into()));
    std::fs::create_dir_all(&dir).map_err(|e| cia_lab::Error::InvalidArgument(e.to_string()))?;

    let capture = generate_stream(&StreamSpec {
        duration_s: 2.0,
        profiles: vec![derive_default_profile()],
        rng_seed: 11,
    })?;
    let csv = dir.join("benign.csv");
    let pcap = dir.join("benign.pcap");
    write_csv(&capture, &csv)?;
    export_pcap(&capture, &pcap)?;

    let back = read_csv(&csv)?;
    assert_eq!(back, capture);
    let size = |p: &PathBuf| std::fs::metadata(p).map(|m| m.len()).unwrap_or(0);
    println!("{} packets", capture.len());
    println!("{} ({} bytes) round-trips exactly", csv.display(), size(&csv));
    println!("{} ({} bytes)", meta_path(&csv).display(), size(&meta_path(&csv)));
    println!("{} ({} bytes), open it with any pcap reader", pcap.display(), size(&pcap));
    Ok(())
}
