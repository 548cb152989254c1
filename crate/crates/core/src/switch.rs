//! Switch forwarding table and the camera-interference attack.
//!
//! The attacker owns an ECU on the camera switch. It rewrites the table
//! entry for a display so the display's traffic egresses the attacker's
//! port, then forwards that traffic on with a second camera's packets mixed
//! in. On the wire the display ends up receiving two interleaved camera
//! streams, each with its own sequence counter.

use std::collections::BTreeMap;
use std::fmt;

use crate::camera::{
    default_left_profile, merge_by_timestamp, CameraProfile, CameraStream, FRONT_CAMERA_MAC, FRONT_DISPLAY_MAC,
    LEFT_CAMERA_MAC, LEFT_DISPLAY_MAC,
};
use crate::capture::{CaptureClass, CaptureMeta, CaptureSet};
use crate::error::{Error, Result};
use crate::packet::{Label, MacAddr, Packet};

pub type Port = u16;

/// Port the infotainment display sits behind in the reference topology.
pub const DISPLAY_PORT: Port = 11;
/// Port of the compromised ECU.
pub const ATTACKER_PORT: Port = 5;

// Keeps the injected camera off the RNG streams used by benign cameras, so
// reusing the benign seed still yields an independent stream.
const INJECTED_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ForwardingTable {
    entries: BTreeMap<MacAddr, Port>,
}

impl ForwardingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn port(&self, mac: &MacAddr) -> Option<Port> {
        self.entries.get(mac).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MacAddr, &Port)> {
        self.entries.iter()
    }
}

impl FromIterator<(MacAddr, Port)> for ForwardingTable {
    fn from_iter<I: IntoIterator<Item = (MacAddr, Port)>>(iter: I) -> Self {
        ForwardingTable {
            entries: iter.into_iter().collect(),
        }
    }
}

/// One `mac port` line per entry, sorted by address.
impl fmt::Display for ForwardingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (mac, port) in &self.entries {
            writeln!(f, "{mac} {port}")?;
        }
        Ok(())
    }
}

/// Record that `src` was seen on `port`, replacing any earlier mapping.
pub fn learn(table: &ForwardingTable, src: MacAddr, port: Port) -> Result<ForwardingTable> {
    if port < 1 {
        return Err(Error::invalid("switch ports are numbered from 1"));
    }
    let mut next = table.clone();
    next.entries.insert(src, port);
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackPlan {
    pub victim_dst: MacAddr,
    pub attacker_port: Port,
    /// Camera whose packets get mixed into the victim's stream.
    pub injected_profile: CameraProfile,
    pub start_s: f64,
    pub end_s: f64,
}

/// Two cameras and two displays, as learned by the camera switch.
pub fn reference_table() -> ForwardingTable {
    [
        (FRONT_CAMERA_MAC, 1),
        (LEFT_CAMERA_MAC, 2),
        (LEFT_DISPLAY_MAC, 10),
        (FRONT_DISPLAY_MAC, DISPLAY_PORT),
    ]
    .into_iter()
    .collect()
}

impl AttackPlan {
    /// Left camera injected into the front display for the whole capture.
    pub fn full_capture(duration_s: f64) -> Self {
        AttackPlan {
            victim_dst: FRONT_DISPLAY_MAC,
            attacker_port: ATTACKER_PORT,
            injected_profile: default_left_profile(),
            start_s: 0.0,
            end_s: duration_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) || self.start_s < 0.0 || self.start_s >= self.end_s {
            return Err(Error::invalid(format!(
                "attack window [{}, {}) must satisfy 0 <= start < end",
                self.start_s, self.end_s
            )));
        }
        if self.attacker_port < 1 {
            return Err(Error::invalid("attacker port must be at least 1"));
        }
        self.injected_profile.validate()
    }

    /// The attacker must sit on a different port than the victim does today.
    pub fn check_against(&self, table: &ForwardingTable) -> Result<()> {
        match table.port(&self.victim_dst) {
            None => Err(Error::UnknownDestination(self.victim_dst)),
            Some(p) if p == self.attacker_port => Err(Error::invalid(format!(
                "attacker port {p} is the victim's legitimate port"
            ))),
            Some(_) => Ok(()),
        }
    }
}

/// Point the victim's entry at the attacker's port. Every other entry is
/// left as it was.
pub fn poison(table: &ForwardingTable, plan: &AttackPlan) -> Result<ForwardingTable> {
    if table.port(&plan.victim_dst).is_none() {
        return Err(Error::UnknownDestination(plan.victim_dst));
    }
    let mut next = table.clone();
    next.entries.insert(plan.victim_dst, plan.attacker_port);
    Ok(next)
}

/// Mix a freshly generated camera stream, addressed to the victim, into a
/// benign capture over `[start_s, end_s)`.
///
/// Output is the timestamp merge of both streams (benign first on ties).
/// Every packet of the result is labeled as interference, matching the
/// per-capture labeling of the reference dataset.
pub fn apply_interference(benign: &CaptureSet, plan: &AttackPlan, rng_seed: u64) -> Result<CaptureSet> {
    plan.validate()?;
    if benign.meta().class != CaptureClass::Normal {
        return Err(Error::invalid("interference must be applied to a normal capture"));
    }
    let duration_s = benign.duration_s();
    if plan.end_s > duration_s + 1e-9 {
        return Err(Error::invalid(format!(
            "attack window ends at {} s but capture lasts {} s",
            plan.end_s, duration_s
        )));
    }

    let mut profile = plan.injected_profile.clone();
    profile.dst = plan.victim_dst;
    let injected: Vec<Packet> = CameraStream::new(profile, plan.start_s, plan.end_s - plan.start_s, rng_seed, INJECTED_STREAM)
        .flatten()
        .collect();

    let mut records = merge_by_timestamp(vec![benign.records().to_vec(), injected]);
    for p in &mut records {
        p.label = Label::Interference;
    }
    let meta = CaptureMeta {
        class: CaptureClass::Interference,
        seed: rng_seed,
        ..benign.meta().clone()
    };
    CaptureSet::new(meta, records)
}

/// Count adjacent packets to `dst` whose sequence numbers are not
/// consecutive modulo 256.
pub fn seq_discontinuities(packets: &[Packet], dst: MacAddr) -> usize {
    let mut prev: Option<u8> = None;
    let mut count = 0;
    for p in packets.iter().filter(|p| p.dst == dst) {
        if let Some(s) = prev {
            if p.seq != s.wrapping_add(1) {
                count += 1;
            }
        }
        prev = Some(p.seq);
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{default_left_profile, derive_default_profile, generate_stream, StreamSpec, FRONT_DISPLAY_MAC};

    const A: MacAddr = MacAddr([2, 0, 0, 0, 0, 0xa]);
    const B: MacAddr = MacAddr([2, 0, 0, 0, 0, 0xb]);
    const C: MacAddr = MacAddr([2, 0, 0, 0, 0, 0xc]);

    fn plan(victim: MacAddr, start_s: f64, end_s: f64) -> AttackPlan {
        AttackPlan {
            victim_dst: victim,
            attacker_port: ATTACKER_PORT,
            injected_profile: default_left_profile(),
            start_s,
            end_s,
        }
    }

    #[test]
    fn learn_inserts_and_replaces() {
        let t = learn(&ForwardingTable::new(), A, 11).unwrap();
        assert_eq!(t.iter().collect::<Vec<_>>(), [(&A, &11)]);
        let t = learn(&t, A, 5).unwrap();
        assert_eq!(t.port(&A), Some(5));
        assert_eq!(t.len(), 1);
        let t: ForwardingTable = [(A, 11), (B, 3)].into_iter().collect();
        let t = learn(&t, C, 7).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!((t.port(&A), t.port(&B), t.port(&C)), (Some(11), Some(3), Some(7)));
        assert!(learn(&t, C, 0).is_err());
    }

    #[test]
    fn poison_redirects_victim_only() {
        let before: ForwardingTable = [(A, DISPLAY_PORT), (B, 3)].into_iter().collect();
        let after = poison(&before, &plan(A, 0.0, 1.0)).unwrap();
        assert_eq!(after.port(&A), Some(ATTACKER_PORT));
        assert_eq!(after.port(&B), Some(3));
        assert_eq!(poison(&after, &plan(A, 0.0, 1.0)).unwrap(), after);
        assert!(matches!(poison(&before, &plan(C, 0.0, 1.0)), Err(Error::UnknownDestination(m)) if m == C));
    }

    #[test]
    fn table_text_dump() {
        let t: ForwardingTable = [(B, 3), (A, 11)].into_iter().collect();
        assert_eq!(t.to_string(), "02:00:00:00:00:0a 11\n02:00:00:00:00:0b 3\n");
    }

    #[test]
    fn plan_validation() {
        assert!(plan(A, 2.0, 1.0).validate().is_err());
        assert!(plan(A, -1.0, 1.0).validate().is_err());
        let t: ForwardingTable = [(A, ATTACKER_PORT)].into_iter().collect();
        assert!(plan(A, 0.0, 1.0).check_against(&t).is_err());
        assert!(matches!(plan(B, 0.0, 1.0).check_against(&t), Err(Error::UnknownDestination(_))));
    }

    fn benign(duration_s: f64) -> CaptureSet {
        generate_stream(&StreamSpec {
            duration_s,
            profiles: vec![derive_default_profile()],
            rng_seed: 21,
        })
        .unwrap()
    }

    #[test]
    fn interference_merges_and_relabels() {
        let base = benign(4.0);
        let mixed = apply_interference(&base, &plan(FRONT_DISPLAY_MAC, 0.0, 4.0), 3).unwrap();
        let injected = mixed.records().iter().filter(|p| p.src != base.records()[0].src).count();
        assert!(injected > 0);
        assert_eq!(mixed.len(), base.len() + injected);
        assert!(mixed.records().iter().all(|p| p.label == Label::Interference && p.dst == FRONT_DISPLAY_MAC));
        assert_eq!(mixed.meta().class, CaptureClass::Interference);
        assert_eq!(seq_discontinuities(base.records(), FRONT_DISPLAY_MAC), 0);
        assert!(seq_discontinuities(mixed.records(), FRONT_DISPLAY_MAC) > 0);
        let again = apply_interference(&base, &plan(FRONT_DISPLAY_MAC, 0.0, 4.0), 3).unwrap();
        assert_eq!(again, mixed);
    }

    #[test]
    fn interference_window_must_fit_capture() {
        let base = benign(1.0);
        assert!(matches!(
            apply_interference(&base, &plan(FRONT_DISPLAY_MAC, 0.5, 2.0), 1),
            Err(Error::InvalidArgument(_))
        ));
        let mixed = apply_interference(&base, &plan(FRONT_DISPLAY_MAC, 0.0, 1.0), 1).unwrap();
        assert!(apply_interference(&mixed, &plan(FRONT_DISPLAY_MAC, 0.0, 1.0), 1).is_err());
    }
}
