//! Wire-level domain types and FU-A style fragmentation.
//!
//! A camera emits coded-video payload units. Units larger than the
//! configured maximum body are split into FU-A fragments (one indicator
//! byte, one header byte carrying start/end bits and the original unit
//! type, then a slice of the unit body). Units that fit are sent whole.
//! Each fragment becomes one [`Packet`] on the wire, whose length is the
//! fixed header overhead plus the body length.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ethernet II header.
pub const ETHERNET_HEADER_LEN: usize = 14;
/// IPv4 header without options.
pub const IPV4_HEADER_LEN: usize = 20;
/// UDP header.
pub const UDP_HEADER_LEN: usize = 8;
/// Ethernet + IPv4 + UDP.
pub const TRANSPORT_OVERHEAD: usize = ETHERNET_HEADER_LEN + IPV4_HEADER_LEN + UDP_HEADER_LEN;
/// Application header: sequence counter, stream id, FU bytes, timestamp.
pub const APP_HEADER_LEN: usize = 12;
/// Largest Ethernet frame without FCS.
pub const MAX_FRAME_LEN: usize = 1514;
/// Body size that makes a full fragment exactly 1474 bytes on the wire.
pub const DEFAULT_MAX_BODY: usize = 1420;

/// FU-A payload type carried in the low five bits of the FU indicator.
pub const FU_A_TYPE: u8 = 28;

const FU_START: u8 = 0x80;
const FU_END: u8 = 0x40;
const TYPE_MASK: u8 = 0x1f;

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const fn new(octets: [u8; 6]) -> Self {
        MacAddr(octets)
    }

    pub fn octets(&self) -> [u8; 6] {
        self.0
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for MacAddr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut octets = [0u8; 6];
        let mut parts = s.split(':');
        for octet in octets.iter_mut() {
            let part = parts
                .next()
                .ok_or_else(|| Error::invalid(format!("mac address {s:?} has fewer than 6 octets")))?;
            if part.len() != 2 {
                return Err(Error::invalid(format!("mac address {s:?}: bad octet {part:?}")));
            }
            *octet = u8::from_str_radix(part, 16)
                .map_err(|_| Error::invalid(format!("mac address {s:?}: bad octet {part:?}")))?;
        }
        if parts.next().is_some() {
            return Err(Error::invalid(format!("mac address {s:?} has more than 6 octets")));
        }
        Ok(MacAddr(octets))
    }
}

/// Identifies the camera that produced a packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CameraId(pub u16);

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ground-truth class of a packet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[default]
    Normal,
    Interference,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Interference => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Normal),
            1 => Some(Label::Interference),
            _ => None,
        }
    }
}

/// A coded-video unit before fragmentation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayloadUnit {
    unit_type: u8,
    data: Vec<u8>,
}

impl PayloadUnit {
    pub fn new(unit_type: u8, data: Vec<u8>) -> Result<Self> {
        if !(1..=23).contains(&unit_type) {
            return Err(Error::invalid(format!("unit type {unit_type} outside 1..=23")));
        }
        if data.is_empty() {
            return Err(Error::invalid("payload unit data must not be empty"));
        }
        Ok(PayloadUnit { unit_type, data })
    }

    pub fn unit_type(&self) -> u8 {
        self.unit_type
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    // IDR slices are reference-critical; everything else gets a lower priority.
    fn nri(&self) -> u8 {
        if self.unit_type == 5 {
            3
        } else {
            2
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuHeader(pub u8);

impl FuHeader {
    pub fn new(start: bool, end: bool, unit_type: u8) -> Self {
        let mut b = unit_type & TYPE_MASK;
        if start {
            b |= FU_START;
        }
        if end {
            b |= FU_END;
        }
        FuHeader(b)
    }

    pub fn start(self) -> bool {
        self.0 & FU_START != 0
    }

    pub fn end(self) -> bool {
        self.0 & FU_END != 0
    }

    pub fn unit_type(self) -> u8 {
        self.0 & TYPE_MASK
    }
}

/// One piece of a payload unit as carried by a single packet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fragment {
    /// The whole unit fits in one packet; no FU bytes.
    Single { nal_header: u8, body: Vec<u8> },
    FuA {
        indicator: u8,
        header: FuHeader,
        body: Vec<u8>,
    },
}

impl Fragment {
    pub fn body(&self) -> &[u8] {
        match self {
            Fragment::Single { body, .. } | Fragment::FuA { body, .. } => body,
        }
    }

    pub fn body_len(&self) -> usize {
        self.body().len()
    }

    pub fn fu_header(&self) -> Option<FuHeader> {
        match self {
            Fragment::Single { .. } => None,
            Fragment::FuA { header, .. } => Some(*header),
        }
    }
}

/// Split `unit` into fragments of at most `max_body` body bytes.
///
/// All fragments but the last carry exactly `max_body` bytes. A unit that
/// already fits is returned as a single unfragmented piece.
pub fn fragment_unit(unit: &PayloadUnit, max_body: usize) -> Result<Vec<Fragment>> {
    if max_body < 1 {
        return Err(Error::invalid("max_body must be at least 1"));
    }
    let nal_header = (unit.nri() << 5) | unit.unit_type;
    if unit.len() <= max_body {
        return Ok(vec![Fragment::Single {
            nal_header,
            body: unit.data.clone(),
        }]);
    }
    let indicator = (unit.nri() << 5) | FU_A_TYPE;
    let count = unit.len().div_ceil(max_body);
    Ok(unit
        .data
        .chunks(max_body)
        .enumerate()
        .map(|(i, chunk)| Fragment::FuA {
            indicator,
            header: FuHeader::new(i == 0, i + 1 == count, unit.unit_type),
            body: chunk.to_vec(),
        })
        .collect())
}

/// Inverse of [`fragment_unit`] for one complete, ordered unit.
pub fn reassemble(fragments: &[Fragment]) -> Result<PayloadUnit> {
    let malformed = |index: usize, reason: &str| Error::MalformedStream {
        index,
        reason: reason.to_string(),
    };
    match fragments {
        [] => Err(malformed(0, "empty fragment list")),
        [Fragment::Single { nal_header, body }] => {
            PayloadUnit::new(nal_header & TYPE_MASK, body.clone()).map_err(|e| malformed(0, &e.to_string()))
        }
        _ => {
            let mut data = Vec::new();
            let mut unit_type = 0;
            let last = fragments.len() - 1;
            for (i, frag) in fragments.iter().enumerate() {
                let (indicator, header, body) = match frag {
                    Fragment::FuA {
                        indicator,
                        header,
                        body,
                    } => (*indicator, *header, body),
                    Fragment::Single { .. } => {
                        return Err(malformed(i, "unfragmented unit inside an FU-A sequence"))
                    }
                };
                if indicator & TYPE_MASK != FU_A_TYPE {
                    return Err(malformed(i, "indicator does not carry the FU-A type"));
                }
                if body.is_empty() {
                    return Err(malformed(i, "empty fragment body"));
                }
                if i == 0 {
                    if !header.start() {
                        return Err(malformed(i, "first fragment lacks the start bit"));
                    }
                    unit_type = header.unit_type();
                } else {
                    if header.start() {
                        return Err(malformed(i, "start bit set on a non-first fragment"));
                    }
                    if header.unit_type() != unit_type {
                        return Err(malformed(i, "unit type differs from the first fragment"));
                    }
                }
                if header.end() && i != last {
                    return Err(malformed(i, "end bit set before the last fragment"));
                }
                if i == last && !header.end() {
                    return Err(malformed(i, "last fragment lacks the end bit"));
                }
                data.extend_from_slice(body);
            }
            PayloadUnit::new(unit_type, data).map_err(|e| malformed(0, &e.to_string()))
        }
    }
}

/// Header bytes added in front of every fragment body on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WireLayout {
    pub header_overhead: usize,
}

impl WireLayout {
    /// Ethernet/IPv4/UDP plus the 12-byte application header.
    pub const CAMERA: WireLayout = WireLayout {
        header_overhead: TRANSPORT_OVERHEAD + APP_HEADER_LEN,
    };
    /// Ethernet/IPv4/UDP only.
    pub const TRANSPORT_ONLY: WireLayout = WireLayout {
        header_overhead: TRANSPORT_OVERHEAD,
    };
}

impl Default for WireLayout {
    fn default() -> Self {
        WireLayout::CAMERA
    }
}

/// Addressing shared by every packet of one camera stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Endpoint {
    pub src: MacAddr,
    pub dst: MacAddr,
    pub source_id: CameraId,
}

/// One fragment as observed on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub timestamp_us: u64,
    pub src: MacAddr,
    pub dst: MacAddr,
    pub seq: u8,
    /// Full on-wire frame length, headers included.
    pub length: u16,
    pub source_id: CameraId,
    pub label: Label,
}

/// Wrap fragments into packets with consecutive 8-bit sequence numbers.
///
/// `clock` is called with the fragment index and returns its timestamp;
/// timestamps are clamped so the output never goes backwards.
pub fn packetize<F>(
    fragments: &[Fragment],
    endpoint: Endpoint,
    layout: WireLayout,
    start_seq: u8,
    mut clock: F,
) -> Vec<Packet>
where
    F: FnMut(usize) -> u64,
{
    let mut last_ts = 0u64;
    fragments
        .iter()
        .enumerate()
        .map(|(i, frag)| {
            let ts = clock(i).max(last_ts);
            last_ts = ts;
            let length = layout.header_overhead + frag.body_len();
            debug_assert!(length <= u16::MAX as usize);
            Packet {
                timestamp_us: ts,
                src: endpoint.src,
                dst: endpoint.dst,
                seq: start_seq.wrapping_add(i as u8),
                length: length as u16,
                source_id: endpoint.source_id,
                label: Label::Normal,
            }
        })
        .collect()
}
