//! Poison the camera switch's forwarding table and show how the
//! display-bound stream changes.

use cia_lab::camera::{derive_default_profile, generate_stream, StreamSpec};
use cia_lab::switch::{apply_interference, poison, reference_table, seq_discontinuities, AttackPlan};

fn main() -> cia_lab::Result<()> {
    let table = reference_table();
    let plan = AttackPlan {
        start_s: 2.0,
        end_s: 6.0,
        ..AttackPlan::full_capture(8.0)
    };
    plan.check_against(&table)?;
    let poisoned = poison(&table, &plan)?;
    println!("before:\n{table}");
    println!("after:\n{poisoned}");

    let benign = generate_stream(&StreamSpec {
        duration_s: 8.0,
        profiles: vec![derive_default_profile()],
        rng_seed: 3,
    })?;
    let attacked = apply_interference(&benign, &plan, 4)?;
    println!(
        "packets to {}: {} benign, {} during attack",
        plan.victim_dst,
        benign.len(),
        attacked.len()
    );
    println!(
        "sequence breaks: {} benign, {} attacked",
        seq_discontinuities(benign.records(), plan.victim_dst),
        seq_discontinuities(attacked.records(), plan.victim_dst)
    );

    let window = |from: f64, to: f64| {
        attacked
            .records()
            .iter()
            .filter(|p| (from * 1e6..to * 1e6).contains(&(p.timestamp_us as f64)))
            .count() as f64
            / (to - from)
    };
    println!(
        "packet rate: {:.0}/s before, {:.0}/s during, {:.0}/s after",
        window(0.0, 2.0),
        window(2.0, 6.0),
        window(6.0, 8.0)
    );
    Ok(())
}
