//! Generate benign camera traffic and compare it with the calibration
//! targets.
//!
//! Usage: `cargo run --release --example camera_stream [seconds]`

use cia_lab::camera::{
    derive_default_profile, generate_stream, stream_stats, StreamSpec, TARGET_MEAN_LENGTH, TARGET_PACKET_RATE,
};

fn main() -> cia_lab::Result<()> {
    let seconds: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60.0);
    let profile = derive_default_profile();
    println!(
        "profile: {} fps, GOP {}, I {:.0}±{:.0} B, P {:.0}±{:.0} B, slice {:.0}±{:.0} B",
        profile.fps,
        profile.gop_length,
        profile.i_frame.mean,
        profile.i_frame.jitter,
        profile.p_frame.mean,
        profile.p_frame.jitter,
        profile.slice.mean,
        profile.slice.jitter
    );

    let stats = stream_stats(&profile, seconds, 1)?;
    println!(
        "{seconds} s: {} frames, {} packets, {:.1} pkt/s (target {:.1}), mean length {:.1} (target {:.1})",
        stats.frames,
        stats.packets,
        stats.packet_rate(),
        TARGET_PACKET_RATE,
        stats.mean_length(),
        TARGET_MEAN_LENGTH
    );

    let capture = generate_stream(&StreamSpec {
        duration_s: 1.0,
        profiles: vec![profile],
        rng_seed: 1,
    })?;
    println!("first packets of a 1 s capture:");
    for p in capture.records().iter().take(6) {
        println!("  t={:>6} us  seq={:>3}  len={}", p.timestamp_us, p.seq, p.length);
    }
    Ok(())
}
