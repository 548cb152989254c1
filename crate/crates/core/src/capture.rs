//! Capture persistence.
//!
//! CSV is the canonical format. A capture's metadata travels in a small
//! `key=value` sidecar next to the CSV (`<file>.meta`) so the CSV itself
//! keeps a single fixed header line. Pcap is export-only.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::packet::{
    CameraId, Label, MacAddr, Packet, APP_HEADER_LEN, ETHERNET_HEADER_LEN, IPV4_HEADER_LEN, MAX_FRAME_LEN,
    TRANSPORT_OVERHEAD, UDP_HEADER_LEN,
};

pub const CSV_HEADER: &str = "timestamp_us,src,dst,seq,length,source_id,label";

/// Smallest frame a record may claim: bare transport headers plus one byte.
pub const MIN_PACKET_LEN: u16 = TRANSPORT_OVERHEAD as u16 + 1;

pub const PCAP_MAGIC: u32 = 0xa1b2_c3d4;
pub const PCAP_GLOBAL_HEADER_LEN: usize = 24;
pub const PCAP_RECORD_HEADER_LEN: usize = 16;
pub const LINKTYPE_ETHERNET: u32 = 1;

const CAMERA_UDP_PORT: u16 = 5004;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CaptureClass {
    #[default]
    Normal,
    Interference,
}

impl CaptureClass {
    pub fn label(self) -> Label {
        match self {
            CaptureClass::Normal => Label::Normal,
            CaptureClass::Interference => Label::Interference,
        }
    }
}

impl fmt::Display for CaptureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaptureClass::Normal => "normal",
            CaptureClass::Interference => "interference",
        })
    }
}

impl FromStr for CaptureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(CaptureClass::Normal),
            "interference" => Ok(CaptureClass::Interference),
            other => Err(Error::invalid(format!("unknown capture class {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaptureMeta {
    /// Hex digest of the generating spec; empty when unknown.
    pub spec_hash: String,
    pub seed: u64,
    pub class: CaptureClass,
    /// Nominal capture length; packets lie in `[0, duration_us)`.
    pub duration_us: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaptureSet {
    meta: CaptureMeta,
    records: Vec<Packet>,
}

impl CaptureSet {
    /// Build a capture, checking timestamp order and label consistency.
    pub fn new(meta: CaptureMeta, records: Vec<Packet>) -> Result<Self> {
        if let Some(i) = records.windows(2).position(|w| w[1].timestamp_us < w[0].timestamp_us) {
            return Err(Error::Validation(format!(
                "record {} has timestamp {} before previous {}",
                i + 1,
                records[i + 1].timestamp_us,
                records[i].timestamp_us
            )));
        }
        let want = meta.class.label();
        if let Some(i) = records.iter().position(|p| p.label != want) {
            return Err(Error::Validation(format!(
                "record {i} label {} does not match {} capture",
                records[i].label.as_u8(),
                meta.class
            )));
        }
        Ok(CaptureSet { meta, records })
    }

    pub fn meta(&self) -> &CaptureMeta {
        &self.meta
    }

    pub fn records(&self) -> &[Packet] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lengths(&self) -> impl Iterator<Item = u16> + '_ {
        self.records.iter().map(|p| p.length)
    }

    pub fn total_bytes(&self) -> u64 {
        self.lengths().map(u64::from).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.meta.duration_us as f64 / 1e6
    }

    pub fn into_parts(self) -> (CaptureMeta, Vec<Packet>) {
        (self.meta, self.records)
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_csv(capture: &CaptureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for p in &capture.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.timestamp_us,
            p.src,
            p.dst,
            p.seq,
            p.length,
            p.source_id,
            p.label.as_u8()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let meta = meta_path(path);
    let m = &capture.meta;
    std::fs::write(
        &meta,
        format!(
            "spec_hash={}\nseed={}\nclass={}\nduration_us={}\n",
            m.spec_hash, m.seed, m.class, m.duration_us
        ),
    )
    .map_err(|e| Error::io(&meta, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CaptureSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut lines = reader.lines();

    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        Some(Ok(h)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {CSV_HEADER:?}, found {h:?}"),
            })
        }
        Some(Err(e)) => return Err(Error::io(path, e)),
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file, missing header".into(),
            })
        }
    }

    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let rec = parse_record(&line).map_err(|message| Error::Parse { line: lineno, message })?;
        if let Some(prev) = records.last() {
            let prev: &Packet = prev;
            if rec.timestamp_us < prev.timestamp_us {
                return Err(Error::Validation(format!(
                    "line {lineno}: timestamp {} precedes {}",
                    rec.timestamp_us, prev.timestamp_us
                )));
            }
        }
        records.push(rec);
    }

    let meta = match std::fs::read_to_string(meta_path(path)) {
        Ok(text) => parse_meta(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => infer_meta(&records),
        Err(e) => return Err(Error::io(meta_path(path), e)),
    };
    CaptureSet::new(meta, records)
}

fn parse_record(line: &str) -> std::result::Result<Packet, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 fields, found {}", fields.len()));
    }
    let num = |idx: usize, name: &str| -> std::result::Result<u64, String> {
        fields[idx]
            .parse::<u64>()
            .map_err(|_| format!("{name}: not an unsigned integer: {:?}", fields[idx]))
    };
    let mac = |idx: usize, name: &str| -> std::result::Result<MacAddr, String> {
        fields[idx].parse::<MacAddr>().map_err(|e| format!("{name}: {e}"))
    };

    let timestamp_us = num(0, "timestamp_us")?;
    let src = mac(1, "src")?;
    let dst = mac(2, "dst")?;
    let seq = num(3, "seq")?;
    if seq > 255 {
        return Err(format!("seq {seq} outside 0..=255"));
    }
    let length = num(4, "length")?;
    if length < MIN_PACKET_LEN as u64 || length > MAX_FRAME_LEN as u64 {
        return Err(format!("length {length} outside {MIN_PACKET_LEN}..={MAX_FRAME_LEN}"));
    }
    let source_id = num(5, "source_id")?;
    let source_id = u16::try_from(source_id).map_err(|_| format!("source_id {source_id} too large"))?;
    let label = num(6, "label")?;
    let label = u8::try_from(label)
        .ok()
        .and_then(Label::from_u8)
        .ok_or_else(|| format!("label {label} is not 0 or 1"))?;

    Ok(Packet {
        timestamp_us,
        src,
        dst,
        seq: seq as u8,
        length: length as u16,
        source_id: CameraId(source_id),
        label,
    })
}

fn parse_meta(text: &str) -> Result<CaptureMeta> {
    let mut meta = CaptureMeta::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| Error::Parse { line: i + 1, message: m };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
        match k {
            "spec_hash" => meta.spec_hash = v.to_string(),
            "seed" => meta.seed = v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?,
            "class" => meta.class = v.parse().map_err(|e: Error| bad(e.to_string()))?,
            "duration_us" => meta.duration_us = v.parse().map_err(|_| bad(format!("bad duration {v:?}")))?,
            other => return Err(bad(format!("unknown metadata key {other:?}"))),
        }
    }
    Ok(meta)
}

fn infer_meta(records: &[Packet]) -> CaptureMeta {
    let class = match records.first().map(|p| p.label) {
        Some(Label::Interference) => CaptureClass::Interference,
        _ => CaptureClass::Normal,
    };
    CaptureMeta {
        spec_hash: String::new(),
        seed: 0,
        class,
        duration_us: records.last().map_or(0, |p| p.timestamp_us + 1),
    }
}

/// Write a classic microsecond pcap with synthetic Ethernet/IPv4/UDP framing.
pub fn export_pcap(capture: &CaptureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_pcap(capture, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pcap<W: Write>(capture: &CaptureSet, mut w: W) -> std::io::Result<()> {
    w.write_all(&PCAP_MAGIC.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?;
    w.write_all(&4u16.to_le_bytes())?;
    w.write_all(&0i32.to_le_bytes())?; // thiszone
    w.write_all(&0u32.to_le_bytes())?; // sigfigs
    w.write_all(&(MAX_FRAME_LEN as u32).to_le_bytes())?;
    w.write_all(&LINKTYPE_ETHERNET.to_le_bytes())?;

    let mut frame = Vec::with_capacity(MAX_FRAME_LEN);
    for p in &capture.records {
        synth_frame(p, &mut frame);
        let len = frame.len() as u32;
        w.write_all(&((p.timestamp_us / 1_000_000) as u32).to_le_bytes())?;
        w.write_all(&((p.timestamp_us % 1_000_000) as u32).to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&frame)?;
    }
    Ok(())
}

fn synth_frame(p: &Packet, frame: &mut Vec<u8>) {
    let len = p.length as usize;
    frame.clear();

    // Ethernet II
    frame.extend_from_slice(&p.dst.0);
    frame.extend_from_slice(&p.src.0);
    frame.extend_from_slice(&0x0800u16.to_be_bytes());

    // IPv4, no options, don't-fragment
    let ip_start = frame.len();
    let ip_total = (len.saturating_sub(ETHERNET_HEADER_LEN)) as u16;
    frame.extend_from_slice(&[0x45, 0x00]);
    frame.extend_from_slice(&ip_total.to_be_bytes());
    frame.extend_from_slice(&u16::from(p.seq).to_be_bytes());
    frame.extend_from_slice(&0x4000u16.to_be_bytes());
    frame.extend_from_slice(&[64, 17, 0, 0]);
    frame.extend_from_slice(&ipv4_for(p.src));
    frame.extend_from_slice(&ipv4_for(p.dst));
    let csum = ipv4_checksum(&frame[ip_start..ip_start + IPV4_HEADER_LEN]);
    frame[ip_start + 10..ip_start + 12].copy_from_slice(&csum.to_be_bytes());

    // UDP, checksum disabled
    let udp_len = (len.saturating_sub(ETHERNET_HEADER_LEN + IPV4_HEADER_LEN)) as u16;
    frame.extend_from_slice(&CAMERA_UDP_PORT.to_be_bytes());
    frame.extend_from_slice(&CAMERA_UDP_PORT.to_be_bytes());
    frame.extend_from_slice(&udp_len.to_be_bytes());
    frame.extend_from_slice(&0u16.to_be_bytes());
    debug_assert_eq!(frame.len(), ETHERNET_HEADER_LEN + IPV4_HEADER_LEN + UDP_HEADER_LEN);

    // application header: version, seq, stream id, timestamp, reserved
    let mut app = [0u8; APP_HEADER_LEN];
    app[0] = 0x80;
    app[1] = p.seq;
    app[2..4].copy_from_slice(&p.source_id.0.to_be_bytes());
    app[4..8].copy_from_slice(&(p.timestamp_us as u32).to_be_bytes());
    frame.extend_from_slice(&app);

    frame.truncate(len);
    let filler = p.seq;
    while frame.len() < len {
        frame.push(filler.wrapping_add(frame.len() as u8));
    }
}

/// Private 10/8 address for a MAC. Cameras and displays differ in the
/// second MAC octet, which keeps them in separate /16s.
fn ipv4_for(mac: MacAddr) -> [u8; 4] {
    [10, mac.0[3] ^ mac.0[1], mac.0[4], mac.0[5]]
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(ts: u64, seq: u8, length: u16, label: Label) -> Packet {
        Packet {
            timestamp_us: ts,
            src: MacAddr([2, 0, 0, 0, 0, 1]),
            dst: MacAddr([2, 0, 0, 0, 0, 2]),
            seq,
            length,
            source_id: CameraId(1),
            label,
        }
    }

    fn sample() -> CaptureSet {
        CaptureSet::new(
            CaptureMeta {
                spec_hash: "abc".into(),
                seed: 9,
                class: CaptureClass::Normal,
                duration_us: 1000,
            },
            vec![
                pkt(1, 0, 1474, Label::Normal),
                pkt(1, 1, 576, Label::Normal),
                pkt(20, 2, 160, Label::Normal),
            ],
        )
        .unwrap()
    }

    #[test]
    fn new_rejects_disorder_and_label_mismatch() {
        let meta = CaptureMeta::default();
        assert!(CaptureSet::new(meta.clone(), vec![pkt(5, 0, 100, Label::Normal), pkt(4, 1, 100, Label::Normal)]).is_err());
        assert!(CaptureSet::new(meta, vec![pkt(5, 0, 100, Label::Interference)]).is_err());
    }

    #[test]
    fn csv_empty_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_csv(&CaptureSet::default(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
        assert_eq!(read_csv(&path).unwrap(), CaptureSet::default());
    }

    #[test]
    fn csv_three_packets_four_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let cap = sample();
        write_csv(&cap, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().nth(1).unwrap(), "1,02:00:00:00:00:01,02:00:00:00:00:02,0,1474,1,0");
        assert_eq!(read_csv(&path).unwrap(), cap);
    }

    #[test]
    fn csv_without_sidecar_infers_meta() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_csv(&sample(), &path).unwrap();
        std::fs::remove_file(meta_path(&path)).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.records(), sample().records());
        assert_eq!(back.meta().class, CaptureClass::Normal);
        assert_eq!(back.meta().duration_us, 21);
    }

    fn read_text(text: &str) -> Result<CaptureSet> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, text).unwrap();
        read_csv(&path)
    }

    #[test]
    fn csv_seq_out_of_range_names_line() {
        let text = format!(
            "{CSV_HEADER}\n0,02:00:00:00:00:01,02:00:00:00:00:02,1,100,1,0\n1,02:00:00:00:00:01,02:00:00:00:00:02,256,100,1,0\n"
        );
        match read_text(&text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("seq"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let row = |r: &str| format!("{CSV_HEADER}\n{r}\n");
        for bad in [
            "0,02:00:00:00:00:01,02:00:00:00:00:02,1,100,1,2",
            "0,02:00:00:00:00:01,02:00:00:00:00:02,1,1515,1,0",
            "0,02:00:00:00:00:01,02:00:00:00:00:02,1,10,1,0",
            "0,02:00:00:00:00:01,02:00:00:00:00,1,100,1,0",
            "x,02:00:00:00:00:01,02:00:00:00:00:02,1,100,1,0",
            "0,02:00:00:00:00:01,02:00:00:00:00:02,1,100,1",
        ] {
            assert!(matches!(read_text(&row(bad)), Err(Error::Parse { line: 2, .. })), "{bad}");
        }
        assert!(matches!(read_text("ts,src\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_text(""), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_out_of_order_is_validation_error() {
        let text = format!(
            "{CSV_HEADER}\n5,02:00:00:00:00:01,02:00:00:00:00:02,1,100,1,0\n4,02:00:00:00:00:01,02:00:00:00:00:02,2,100,1,0\n"
        );
        assert!(matches!(read_text(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_file_is_io_error_with_path() {
        let err = read_csv("/nonexistent/dir/cap.csv").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/dir/cap.csv"));
    }

    #[test]
    fn pcap_empty_is_global_header_only() {
        let mut buf = Vec::new();
        write_pcap(&CaptureSet::default(), &mut buf).unwrap();
        assert_eq!(buf.len(), PCAP_GLOBAL_HEADER_LEN);
        assert_eq!(&buf[..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 2);
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 4);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), LINKTYPE_ETHERNET);
    }

    #[test]
    fn pcap_record_lengths_match_packets() {
        let cap = sample();
        let mut buf = Vec::new();
        write_pcap(&cap, &mut buf).unwrap();
        let mut off = PCAP_GLOBAL_HEADER_LEN;
        let mut total = 0u64;
        for p in cap.records() {
            let incl = u32::from_le_bytes(buf[off + 8..off + 12].try_into().unwrap());
            let orig = u32::from_le_bytes(buf[off + 12..off + 16].try_into().unwrap());
            assert_eq!(incl, p.length as u32);
            assert_eq!(orig, p.length as u32);
            let frame = &buf[off + 16..off + 16 + incl as usize];
            assert_eq!(&frame[0..6], &p.dst.0);
            assert_eq!(&frame[12..14], &[0x08, 0x00]);
            assert_eq!(ipv4_checksum(&frame[14..34]), 0);
            assert_eq!(frame[43], p.seq);
            total += incl as u64;
            off += 16 + incl as usize;
        }
        assert_eq!(off, buf.len());
        assert_eq!(total, cap.total_bytes());
    }
}
