//! Synthetic camera traffic.
//!
//! Each camera produces frames on a fixed GOP pattern (one I-frame, then
//! P-frames). A frame's size fixes how many slices it is coded as; each
//! slice is one payload unit, fragmented FU-A style and sent as a burst of
//! packets spread evenly over the frame interval.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::capture::{CaptureClass, CaptureMeta, CaptureSet};
use crate::error::{Error, Result};
use crate::packet::{
    fragment_unit, packetize, CameraId, Endpoint, Fragment, MacAddr, Packet, PayloadUnit, WireLayout,
    DEFAULT_MAX_BODY,
};

pub const FRONT_CAMERA_MAC: MacAddr = MacAddr([0x02, 0xca, 0x00, 0x00, 0x00, 0x01]);
pub const LEFT_CAMERA_MAC: MacAddr = MacAddr([0x02, 0xca, 0x00, 0x00, 0x00, 0x02]);
pub const FRONT_DISPLAY_MAC: MacAddr = MacAddr([0x02, 0xd1, 0x00, 0x00, 0x00, 0x01]);
pub const LEFT_DISPLAY_MAC: MacAddr = MacAddr([0x02, 0xd1, 0x00, 0x00, 0x00, 0x02]);

pub const FRONT_CAMERA: CameraId = CameraId(1);
pub const LEFT_CAMERA: CameraId = CameraId(2);

/// Packets per second in the reference 30-minute normal capture.
pub const TARGET_PACKET_RATE: f64 = 6_346_876.0 / 1800.0;
/// Mean on-wire length in the reference normal capture.
pub const TARGET_MEAN_LENGTH: f64 = 5.86e9 / 6_346_876.0;

const IDR_SLICE: u8 = 5;
const NON_IDR_SLICE: u8 = 1;

/// A size in bytes drawn from a normal distribution with standard deviation
/// `jitter / 2`, truncated to `mean ± jitter`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeDist {
    pub mean: f64,
    pub jitter: f64,
}

impl SizeDist {
    pub const fn new(mean: f64, jitter: f64) -> Self {
        SizeDist { mean, jitter }
    }

    pub fn min(&self) -> f64 {
        self.mean - self.jitter
    }

    pub fn max(&self) -> f64 {
        self.mean + self.jitter
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.mean.is_finite() && self.jitter.is_finite()) || self.mean < 1.0 || self.jitter < 0.0 {
            return Err(Error::invalid(format!("{what}: mean must be >= 1 and jitter >= 0")));
        }
        if self.jitter >= self.mean {
            return Err(Error::invalid(format!("{what}: jitter must be below the mean")));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        if self.jitter == 0.0 {
            return self.mean.round() as usize;
        }
        let normal = Normal::new(self.mean, self.jitter / 2.0).expect("validated jitter");
        // rejection keeps the draw symmetric, so the mean is preserved
        let v = loop {
            let v: f64 = normal.sample(rng);
            if (self.min()..=self.max()).contains(&v) {
                break v;
            }
        };
        (v.round() as usize).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraProfile {
    pub camera_id: CameraId,
    pub fps: f64,
    pub gop_length: u32,
    pub i_frame: SizeDist,
    pub p_frame: SizeDist,
    /// Coded slice size; frames are cut into `round(frame / slice.mean)` slices.
    pub slice: SizeDist,
    pub max_body: usize,
    pub src: MacAddr,
    pub dst: MacAddr,
}

impl CameraProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("fps must be positive"));
        }
        if self.gop_length < 1 {
            return Err(Error::invalid("gop_length must be at least 1"));
        }
        if self.max_body < 1 {
            return Err(Error::invalid("max_body must be at least 1"));
        }
        self.i_frame.validate("i_frame")?;
        self.p_frame.validate("p_frame")?;
        self.slice.validate("slice")
    }

    pub fn frame_interval_us(&self) -> f64 {
        1e6 / self.fps
    }

    pub fn endpoint(&self) -> Endpoint {
        Endpoint {
            src: self.src,
            dst: self.dst,
            source_id: self.camera_id,
        }
    }
}

/// Front camera calibrated against the reference normal capture
/// (about 3526 packets/s with a mean length of about 923 bytes).
///
/// Slices are kept between one and two full bodies long, so each slice is
/// one full-size packet (1474 bytes) followed by a shorter tail.
pub fn derive_default_profile() -> CameraProfile {
    CameraProfile {
        camera_id: FRONT_CAMERA,
        fps: 30.0,
        gop_length: 30,
        i_frame: SizeDist::new(180_000.0, 20_000.0),
        p_frame: SizeDist::new(99_500.0, 15_000.0),
        slice: SizeDist::new(1738.0, 300.0),
        max_body: DEFAULT_MAX_BODY,
        src: FRONT_CAMERA_MAC,
        dst: FRONT_DISPLAY_MAC,
    }
}

/// Left around-view camera: same coding model as the front camera, its own
/// addresses and display.
pub fn default_left_profile() -> CameraProfile {
    CameraProfile {
        camera_id: LEFT_CAMERA,
        src: LEFT_CAMERA_MAC,
        dst: LEFT_DISPLAY_MAC,
        ..derive_default_profile()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSpec {
    pub duration_s: f64,
    pub profiles: Vec<CameraProfile>,
    pub rng_seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("duration_s must be positive"));
        }
        if self.profiles.is_empty() {
            return Err(Error::invalid("stream spec needs at least one camera profile"));
        }
        self.profiles.iter().try_for_each(CameraProfile::validate)
    }

    /// Short hex digest identifying this spec in capture metadata.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(format!("{self:?}").as_bytes());
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Frame-by-frame packet generator for one camera.
pub struct CameraStream {
    profile: CameraProfile,
    rng: ChaCha8Rng,
    start_us: f64,
    frame: u64,
    frames: u64,
    seq: u8,
}

impl CameraStream {
    /// Frames cover `[offset_s, offset_s + duration_s)`; the first frame starts
    /// at a seeded random phase within the first frame interval.
    pub fn new(profile: CameraProfile, offset_s: f64, duration_s: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let interval = profile.frame_interval_us();
        let phase = rng.random_range(0.0..interval);
        let span = duration_s * 1e6 - phase;
        let frames = if span > 0.0 { (span / interval).floor() as u64 } else { 0 };
        CameraStream {
            profile,
            rng,
            start_us: offset_s * 1e6 + phase,
            frame: 0,
            frames,
            seq: 0,
        }
    }

    pub fn frame_count(&self) -> u64 {
        self.frames
    }

    fn next_frame(&mut self) -> Vec<Packet> {
        let p = &self.profile;
        let is_idr = self.frame.is_multiple_of(u64::from(p.gop_length));
        let (size_dist, unit_type) = if is_idr {
            (p.i_frame, IDR_SLICE)
        } else {
            (p.p_frame, NON_IDR_SLICE)
        };
        let frame_bytes = size_dist.sample(&mut self.rng);
        let slices = ((frame_bytes as f64 / p.slice.mean).round() as usize).max(1);

        let units: Vec<Vec<Fragment>> = (0..slices)
            .map(|_| {
                let size = p.slice.sample(&mut self.rng);
                let unit = PayloadUnit::new(unit_type, vec![0; size]).expect("slice size >= 1");
                fragment_unit(&unit, p.max_body).expect("max_body validated")
            })
            .collect();

        let total: usize = units.iter().map(Vec::len).sum();
        let interval = p.frame_interval_us();
        let frame_start = self.start_us + self.frame as f64 * interval;
        let step = interval / total as f64;

        let mut packets = Vec::with_capacity(total);
        for frags in &units {
            let base = packets.len();
            packets.extend(packetize(frags, p.endpoint(), WireLayout::CAMERA, self.seq, |i| {
                (frame_start + (base + i) as f64 * step).floor() as u64
            }));
            self.seq = self.seq.wrapping_add(frags.len() as u8);
        }
        self.frame += 1;
        packets
    }
}

impl Iterator for CameraStream {
    type Item = Vec<Packet>;

    fn next(&mut self) -> Option<Vec<Packet>> {
        (self.frame < self.frames).then(|| self.next_frame())
    }
}

/// Stable merge by timestamp; on ties earlier streams win.
pub(crate) fn merge_by_timestamp(streams: Vec<Vec<Packet>>) -> Vec<Packet> {
    let mut all: Vec<Packet> = streams.into_iter().flatten().collect();
    all.sort_by_key(|p| p.timestamp_us);
    all
}

/// Generate a benign capture: every profile runs for the full duration and
/// the streams are merged by timestamp.
pub fn generate_stream(spec: &StreamSpec) -> Result<CaptureSet> {
    spec.validate()?;
    let streams: Vec<Vec<Packet>> = spec
        .profiles
        .par_iter()
        .enumerate()
        .map(|(i, profile)| {
            CameraStream::new(profile.clone(), 0.0, spec.duration_s, spec.rng_seed, i as u64)
                .flatten()
                .collect()
        })
        .collect();
    let meta = CaptureMeta {
        spec_hash: spec.digest(),
        seed: spec.rng_seed,
        class: CaptureClass::Normal,
        duration_us: (spec.duration_s * 1e6).round() as u64,
    };
    CaptureSet::new(meta, merge_by_timestamp(streams))
}

/// Aggregate counts for a single camera run, without materialising packets.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StreamStats {
    pub frames: u64,
    pub packets: u64,
    pub bytes: u64,
    pub duration_s: f64,
}

impl StreamStats {
    pub fn packet_rate(&self) -> f64 {
        self.packets as f64 / self.duration_s
    }

    pub fn mean_length(&self) -> f64 {
        self.bytes as f64 / self.packets as f64
    }

    pub fn packets_per_frame(&self) -> f64 {
        self.packets as f64 / self.frames as f64
    }
}

pub fn stream_stats(profile: &CameraProfile, duration_s: f64, seed: u64) -> Result<StreamStats> {
    profile.validate()?;
    let mut stats = StreamStats {
        duration_s,
        ..Default::default()
    };
    for frame in CameraStream::new(profile.clone(), 0.0, duration_s, seed, 0) {
        stats.frames += 1;
        stats.packets += frame.len() as u64;
        stats.bytes += frame.iter().map(|p| u64::from(p.length)).sum::<u64>();
    }
    Ok(stats)
}
