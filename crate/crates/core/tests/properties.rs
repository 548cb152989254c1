use std::collections::BTreeMap;

use cia_lab::camera::{default_left_profile, derive_default_profile, generate_stream, StreamSpec};
use cia_lab::capture::{read_csv, write_csv, CaptureClass, CaptureMeta, CaptureSet};
use cia_lab::eval::evaluate;
use cia_lab::features::{make_windows, make_windows_multi, normalize, BigramHistogram};
use cia_lab::packet::{CameraId, Label, MacAddr, Packet};
use proptest::prelude::*;

fn capture_from_lengths(lengths: &[u16], class: CaptureClass) -> CaptureSet {
    let label = class.label();
    let packets = lengths
        .iter()
        .enumerate()
        .map(|(i, &length)| Packet {
            timestamp_us: i as u64 * 250,
            src: MacAddr([2, 0, 0, 0, 0, 1]),
            dst: MacAddr([2, 0, 0, 0, 0, 2]),
            seq: i as u8,
            length,
            source_id: CameraId(1),
            label,
        })
        .collect();
    let meta = CaptureMeta {
        class,
        duration_us: lengths.len() as u64 * 250,
        ..Default::default()
    };
    CaptureSet::new(meta, packets).unwrap()
}

fn arb_packets() -> impl Strategy<Value = Vec<Packet>> {
    prop::collection::vec(
        (0u64..5_000, any::<[u8; 6]>(), any::<[u8; 6]>(), any::<u8>(), 43u16..=1514, any::<u16>()),
        0..60,
    )
    .prop_map(|rows| {
        let mut ts = 0;
        rows.into_iter()
            .map(|(gap, src, dst, seq, length, id)| {
                ts += gap;
                Packet {
                    timestamp_us: ts,
                    src: MacAddr(src),
                    dst: MacAddr(dst),
                    seq,
                    length,
                    source_id: CameraId(id),
                    label: Label::Interference,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn csv_round_trip(packets in arb_packets(), seed in any::<u64>()) {
        let duration_us = packets.last().map_or(0, |p| p.timestamp_us + 1);
        let meta = CaptureMeta {
            spec_hash: format!("{seed:016x}"),
            seed,
            class: CaptureClass::Interference,
            duration_us,
        };
        let cap = CaptureSet::new(meta, packets).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_csv(&cap, &path).unwrap();
        prop_assert_eq!(read_csv(&path).unwrap(), cap);
    }

    #[test]
    fn generated_sequences_are_continuous(seed in any::<u64>(), duration in 0.2f64..2.0) {
        let mut left = default_left_profile();
        left.dst = MacAddr([2, 0xd1, 0, 0, 0, 2]);
        let cap = generate_stream(&StreamSpec {
            duration_s: duration,
            profiles: vec![derive_default_profile(), left],
            rng_seed: seed,
        })
        .unwrap();
        let mut last: BTreeMap<CameraId, u8> = BTreeMap::new();
        for p in cap.records() {
            prop_assert_eq!(p.label, Label::Normal);
            if let Some(prev) = last.insert(p.source_id, p.seq) {
                prop_assert_eq!(p.seq, prev.wrapping_add(1));
            }
        }
        prop_assert!(cap.records().windows(2).all(|w| w[0].timestamp_us <= w[1].timestamp_us));
    }

    #[test]
    fn evaluate_ignores_order(
        pairs in prop::collection::vec((0u32..50, any::<bool>()), 1..80),
        rotate in 0usize..80,
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 50.0).collect();
        let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let base = evaluate(&scores, &truth, 0.5).unwrap();
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.rotate_left(rotate % pairs.len());
        idx.reverse();
        let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let t2: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
        prop_assert_eq!(evaluate(&s2, &t2, 0.5).unwrap(), base);
    }

    #[test]
    fn auc_survives_monotone_transforms(
        pairs in prop::collection::vec((0u32..1000, any::<bool>()), 2..100),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 1000.0).collect();
        let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() / 25.0).collect();
        let a = evaluate(&scores, &truth, 0.5).unwrap().auc;
        let b = evaluate(&warped, &truth, 0.5).unwrap().auc;
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn complement_identities_are_exact(
        pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..100),
        threshold in 0.01f64..0.99,
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let r = evaluate(&scores, &truth, threshold).unwrap();
        prop_assert_eq!(r.tp + r.fp + r.tn + r.fn_, pairs.len());
        if r.fp + r.tn > 0 {
            prop_assert_eq!(r.tnr, 1.0 - r.fpr);
            prop_assert_eq!(r.fpr, r.fp as f64 / (r.fp + r.tn) as f64);
        }
        if r.tp + r.fn_ > 0 {
            prop_assert_eq!(r.fnr, 1.0 - r.tpr);
            prop_assert_eq!(r.tpr, r.tp as f64 / (r.tp + r.fn_) as f64);
        }
        if let Some(auc) = r.auc {
            prop_assert!((0.0..=1.0).contains(&auc));
        }
        let first = r.roc_points.first().unwrap();
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
    }

    #[test]
    fn reshape_windows_tile_the_prefix(
        lengths in prop::collection::vec(43u16..=1514, 2..400),
        window in 2usize..40,
    ) {
        prop_assume!(lengths.len() >= window);
        let cap = capture_from_lengths(&lengths, CaptureClass::Normal);
        let wm = make_windows(&cap, window, window).unwrap();
        prop_assert_eq!(wm.len(), lengths.len() / window);
        let flat: Vec<f64> = wm.rows().flatten().copied().collect();
        let prefix: Vec<f64> = lengths[..wm.len() * window].iter().map(|&l| l as f64).collect();
        prop_assert_eq!(flat, prefix);
        prop_assert!(wm.labels().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn windows_never_straddle_captures(
        a in prop::collection::vec(43u16..=1514, 10..120),
        b in prop::collection::vec(43u16..=1514, 10..120),
        window in 2usize..10,
        stride_pick in 1usize..10,
    ) {
        let stride = stride_pick.min(window);
        let ca = capture_from_lengths(&a, CaptureClass::Normal);
        let cb = capture_from_lengths(&b, CaptureClass::Interference);
        let wm = make_windows_multi(&[&ca, &cb], window, stride).unwrap();
        let count = |n: usize| (n - window) / stride + 1;
        prop_assert_eq!(wm.len(), count(a.len()) + count(b.len()));
        prop_assert!(wm.labels().iter().all(|&y| y == 0.0 || y == 1.0));
        if let Ok(norm) = normalize(&wm) {
            prop_assert!(norm.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn bigram_total_counts_adjacent_pairs(
        segments in prop::collection::vec(prop::collection::vec(43u16..=60, 1..50), 1..5),
    ) {
        let mut hist = BigramHistogram::default();
        for s in &segments {
            hist.add_segment(s);
        }
        let expected: usize = segments.iter().map(|s| s.len() - 1).sum();
        prop_assert_eq!(hist.total(), expected as u64);
        let merged = segments.iter().fold(BigramHistogram::default(), |mut acc, s| {
            acc.merge(&BigramHistogram::from_lengths(s));
            acc
        });
        prop_assert_eq!(merged, hist);
    }
}

#[test]
fn normalized_values_stay_in_unit_interval() {
    let lengths: Vec<u16> = (0..500).map(|i| 60 + (i * 37 % 1415) as u16).collect();
    let cap = capture_from_lengths(&lengths, CaptureClass::Normal);
    let wm = normalize(&make_windows(&cap, 20, 7).unwrap()).unwrap();
    assert!(wm.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(wm.normalization().is_some());
}

#[test]
fn windowed_injection_breaks_sequences_only_inside_window() {
    use cia_lab::camera::{FRONT_CAMERA_MAC, FRONT_DISPLAY_MAC};
    use cia_lab::switch::{apply_interference, AttackPlan};

    let benign = generate_stream(&StreamSpec {
        duration_s: 30.0,
        profiles: vec![derive_default_profile()],
        rng_seed: 61,
    })
    .unwrap();
    let plan = AttackPlan {
        start_s: 10.0,
        end_s: 20.0,
        ..AttackPlan::full_capture(30.0)
    };
    let mixed = apply_interference(&benign, &plan, 62).unwrap();
    assert!(mixed.records().iter().all(|p| p.label == Label::Interference));

    // the front camera's own counter is untouched everywhere
    let front: Vec<u8> = mixed.records().iter().filter(|p| p.src == FRONT_CAMERA_MAC).map(|p| p.seq).collect();
    assert_eq!(front.len(), benign.len());
    assert!(front.windows(2).all(|w| w[1] == w[0].wrapping_add(1)));

    // merged per-destination scan: every break sits in the window, allowing
    // one frame interval for the stream that resumes after it closes
    let to_display: Vec<&Packet> = mixed.records().iter().filter(|p| p.dst == FRONT_DISPLAY_MAC).collect();
    let frame_us = 1e6 / 30.0;
    let mut breaks = 0;
    for w in to_display.windows(2) {
        if w[1].seq != w[0].seq.wrapping_add(1) {
            breaks += 1;
            let t = w[1].timestamp_us as f64;
            assert!((10e6..=20e6 + frame_us).contains(&t), "break at {t} us");
        }
    }
    assert!(breaks > 100, "{breaks}");
}
