//! Packet-length features: fixed-size windows for the detector and the
//! adjacent-length (2-gram) histogram.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::capture::CaptureSet;
use crate::error::{Error, Result};

pub const HEATMAP_CSV_HEADER: &str = "len_a,len_b,count";

/// Min-max scaling fitted on training windows, clipping outside values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::Numeric("normalization bounds must be finite".into()));
        }
        if max <= min {
            return Err(Error::DegenerateScale(min));
        }
        Ok(Normalization { min, max })
    }

    pub fn fit(wm: &WindowMatrix) -> Result<Self> {
        if wm.normalization.is_some() {
            return Err(Error::invalid("window matrix is already normalized"));
        }
        let (min, max) = wm
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if wm.data.is_empty() {
            return Err(Error::InsufficientData { required: 1, actual: 0 });
        }
        Normalization::new(min, max)
    }

    pub fn scale(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn apply(&self, wm: &WindowMatrix) -> Result<WindowMatrix> {
        if wm.normalization.is_some() {
            return Err(Error::invalid("window matrix is already normalized"));
        }
        Ok(WindowMatrix {
            data: wm.data.iter().map(|&v| self.scale(v)).collect(),
            normalization: Some(*self),
            ..wm.clone()
        })
    }
}

/// `n` windows of `W` packet lengths each, with per-packet and per-window labels.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMatrix {
    window: usize,
    data: Vec<f64>,
    raw_labels: Vec<u8>,
    labels: Vec<f64>,
    normalization: Option<Normalization>,
}

impl WindowMatrix {
    /// Assemble from row-major parts; window labels are the row means.
    pub fn from_rows(window: usize, data: Vec<f64>, raw_labels: Vec<u8>) -> Result<Self> {
        if window < 2 {
            return Err(Error::invalid("window size must be at least 2"));
        }
        if !data.len().is_multiple_of(window) {
            return Err(Error::Shape {
                expected: data.len() / window * window,
                actual: data.len(),
            });
        }
        if raw_labels.len() != data.len() {
            return Err(Error::Shape {
                expected: data.len(),
                actual: raw_labels.len(),
            });
        }
        if raw_labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("packet labels must be 0 or 1"));
        }
        let labels = raw_labels
            .chunks(window)
            .map(|row| row.iter().map(|&l| f64::from(l)).sum::<f64>() / window as f64)
            .collect();
        Ok(WindowMatrix {
            window,
            data,
            raw_labels,
            labels,
            normalization: None,
        })
    }

    pub fn empty(window: usize) -> Self {
        WindowMatrix {
            window,
            data: Vec::new(),
            raw_labels: Vec::new(),
            labels: Vec::new(),
            normalization: None,
        }
    }

    pub fn window_size(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.window..(i + 1) * self.window]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.window)
    }

    pub fn raw_label_row(&self, i: usize) -> &[u8] {
        &self.raw_labels[i * self.window..(i + 1) * self.window]
    }

    /// Mean packet label of each window.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Window ground truth for metrics: mean label at or above one half.
    pub fn truth(&self) -> Vec<bool> {
        self.labels.iter().map(|&y| y >= 0.5).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn normalization(&self) -> Option<Normalization> {
        self.normalization
    }

    /// Windows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> WindowMatrix {
        let mut out = WindowMatrix {
            normalization: self.normalization,
            ..WindowMatrix::empty(self.window)
        };
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
            out.raw_labels.extend_from_slice(self.raw_label_row(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// Stack windows of equal size and normalization state.
    pub fn concat(parts: &[WindowMatrix]) -> Result<WindowMatrix> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        let mut out = WindowMatrix {
            normalization: first.normalization,
            ..WindowMatrix::empty(first.window)
        };
        for p in parts {
            if p.window != first.window {
                return Err(Error::Shape {
                    expected: first.window,
                    actual: p.window,
                });
            }
            if p.normalization != first.normalization {
                return Err(Error::invalid("cannot mix differently normalized windows"));
            }
            out.data.extend_from_slice(&p.data);
            out.raw_labels.extend_from_slice(&p.raw_labels);
            out.labels.extend_from_slice(&p.labels);
        }
        Ok(out)
    }
}

/// Cut a capture's length sequence into windows of `window` packets starting
/// every `stride` packets. A trailing remainder shorter than a window is
/// dropped; `stride == window` is a plain reshape into `(n, window)`.
pub fn make_windows(capture: &CaptureSet, window: usize, stride: usize) -> Result<WindowMatrix> {
    if window < 2 {
        return Err(Error::invalid("window size must be at least 2"));
    }
    if stride < 1 || stride > window {
        return Err(Error::invalid(format!("stride {stride} must be in 1..={window}")));
    }
    let records = capture.records();
    if records.len() < window {
        return Err(Error::InsufficientData {
            required: window,
            actual: records.len(),
        });
    }
    let n = (records.len() - window) / stride + 1;
    let mut data = Vec::with_capacity(n * window);
    let mut raw_labels = Vec::with_capacity(n * window);
    for start in (0..n).map(|i| i * stride) {
        for p in &records[start..start + window] {
            data.push(f64::from(p.length));
            raw_labels.push(p.label.as_u8());
        }
    }
    WindowMatrix::from_rows(window, data, raw_labels)
}

/// Windows from several captures; no window spans two captures.
pub fn make_windows_multi(captures: &[&CaptureSet], window: usize, stride: usize) -> Result<WindowMatrix> {
    let parts = captures
        .iter()
        .map(|c| make_windows(c, window, stride))
        .collect::<Result<Vec<_>>>()?;
    WindowMatrix::concat(&parts)
}

/// Fit min-max scaling on `wm` itself and apply it.
pub fn normalize(wm: &WindowMatrix) -> Result<WindowMatrix> {
    Normalization::fit(wm)?.apply(wm)
}

/// Counts of adjacent `(len_k, len_k+1)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BigramHistogram {
    counts: BTreeMap<(u16, u16), u64>,
}

impl BigramHistogram {
    pub fn from_lengths(lengths: &[u16]) -> Self {
        let mut h = BigramHistogram::default();
        h.add_segment(lengths);
        h
    }

    pub fn add_segment(&mut self, lengths: &[u16]) {
        for w in lengths.windows(2) {
            *self.counts.entry((w[0], w[1])).or_insert(0) += 1;
        }
    }

    pub fn merge(&mut self, other: &BigramHistogram) {
        for (k, v) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += v;
        }
    }

    pub fn get(&self, a: u16, b: u16) -> u64 {
        self.counts.get(&(a, b)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((u16, u16), u64)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }

    pub fn keys(&self) -> impl Iterator<Item = (u16, u16)> + '_ {
        self.counts.keys().copied()
    }

    /// True when every pair seen here also appears in `other`.
    pub fn support_subset_of(&self, other: &BigramHistogram) -> bool {
        self.counts.keys().all(|k| other.counts.contains_key(k))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEATMAP_CSV_HEADER}")?;
        for ((a, b), c) in &self.counts {
            writeln!(w, "{a},{b},{c}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn bigram_histogram(capture: &CaptureSet) -> Result<BigramHistogram> {
    if capture.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: capture.len(),
        });
    }
    let lengths: Vec<u16> = capture.lengths().collect();
    Ok(BigramHistogram::from_lengths(&lengths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{CaptureClass, CaptureMeta};
    use crate::packet::{CameraId, Label, MacAddr, Packet};

    fn capture(lengths: &[u16], class: CaptureClass) -> CaptureSet {
        let records = lengths
            .iter()
            .enumerate()
            .map(|(i, &length)| Packet {
                timestamp_us: i as u64,
                src: MacAddr::default(),
                dst: MacAddr::default(),
                seq: i as u8,
                length,
                source_id: CameraId(1),
                label: class.label(),
            })
            .collect();
        CaptureSet::new(
            CaptureMeta {
                class,
                ..Default::default()
            },
            records,
        )
        .unwrap()
    }

    #[test]
    fn reshape_drops_remainder() {
        let lengths: Vec<u16> = (0..1000).map(|i| 60 + (i % 100) as u16).collect();
        let wm = make_windows(&capture(&lengths, CaptureClass::Normal), 255, 255).unwrap();
        assert_eq!(wm.len(), 3);
        assert_eq!(wm.data().len(), 765);
        let flat: Vec<f64> = lengths[..765].iter().map(|&l| f64::from(l)).collect();
        assert_eq!(wm.data(), &flat[..]);
        assert!(wm.labels().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn attack_windows_have_unit_labels() {
        let lengths = vec![100u16; 40];
        let wm = make_windows(&capture(&lengths, CaptureClass::Interference), 8, 8).unwrap();
        assert_eq!(wm.labels(), &[1.0; 5]);
        assert_eq!(wm.truth(), vec![true; 5]);
    }

    #[test]
    fn sliding_windows_of_the_worked_sequence() {
        let wm = make_windows(&capture(&[576, 1474, 160, 1474], CaptureClass::Normal), 3, 1).unwrap();
        assert_eq!(wm.len(), 2);
        assert_eq!(wm.row(0), &[576.0, 1474.0, 160.0]);
        assert_eq!(wm.row(1), &[1474.0, 160.0, 1474.0]);
    }

    #[test]
    fn window_arguments_checked() {
        let cap = capture(&[100; 10], CaptureClass::Normal);
        assert!(make_windows(&cap, 1, 1).is_err());
        assert!(make_windows(&cap, 4, 0).is_err());
        assert!(make_windows(&cap, 4, 5).is_err());
        match make_windows(&cap, 11, 11) {
            Err(Error::InsufficientData { required, actual }) => assert_eq!((required, actual), (11, 10)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mixed_labels_average() {
        let wm = WindowMatrix::from_rows(4, vec![1.0; 8], vec![0, 1, 1, 1, 0, 0, 0, 1]).unwrap();
        assert_eq!(wm.labels(), &[0.75, 0.25]);
        assert_eq!(wm.truth(), vec![true, false]);
        assert!(WindowMatrix::from_rows(4, vec![1.0; 7], vec![0; 7]).is_err());
        assert!(WindowMatrix::from_rows(4, vec![1.0; 4], vec![0, 0, 2, 0]).is_err());
    }

    #[test]
    fn multi_capture_windows_do_not_span() {
        let a = capture(&[10, 20, 30, 40, 50], CaptureClass::Normal);
        let b = capture(&[60, 70, 80, 90, 100], CaptureClass::Interference);
        let wm = make_windows_multi(&[&a, &b], 2, 2).unwrap();
        assert_eq!(wm.len(), 4);
        assert_eq!(wm.row(2), &[60.0, 70.0]);
        assert_eq!(wm.labels(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn min_max_scaling() {
        let train = WindowMatrix::from_rows(2, vec![60.0, 1474.0, 767.0, 60.0], vec![0; 4]).unwrap();
        let n = normalize(&train).unwrap();
        assert_eq!(n.row(0), &[0.0, 1.0]);
        assert_eq!(n.row(1)[0], 0.5);
        let norm = n.normalization().unwrap();
        assert_eq!((norm.min, norm.max), (60.0, 1474.0));
        let test = WindowMatrix::from_rows(2, vec![2000.0, 10.0], vec![0; 2]).unwrap();
        assert_eq!(norm.apply(&test).unwrap().row(0), &[1.0, 0.0]);
        assert!(norm.apply(&n).is_err());
    }

    #[test]
    fn constant_data_is_degenerate() {
        let wm = WindowMatrix::from_rows(2, vec![5.0; 4], vec![0; 4]).unwrap();
        assert!(matches!(normalize(&wm), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn select_and_concat() {
        let wm = WindowMatrix::from_rows(2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0, 0, 1, 1, 0, 1]).unwrap();
        let s = wm.select(&[2, 0]);
        assert_eq!(s.row(0), &[5.0, 6.0]);
        assert_eq!(s.labels(), &[0.5, 0.0]);
        let c = WindowMatrix::concat(&[s.clone(), wm.select(&[1])]).unwrap();
        assert_eq!(c.len(), 3);
        assert!(WindowMatrix::concat(&[s, WindowMatrix::empty(3)]).is_err());
    }

    #[test]
    fn bigram_worked_example() {
        let h = bigram_histogram(&capture(&[576, 1474, 160, 1474], CaptureClass::Normal)).unwrap();
        assert_eq!(h.distinct(), 3);
        assert_eq!(h.get(576, 1474), 1);
        assert_eq!(h.get(1474, 160), 1);
        assert_eq!(h.get(160, 1474), 1);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn bigram_repeated_and_short() {
        let h = BigramHistogram::from_lengths(&[7, 7, 7]);
        assert_eq!(h.iter().collect::<Vec<_>>(), [((7, 7), 2)]);
        assert!(bigram_histogram(&capture(&[7], CaptureClass::Normal)).is_err());
    }

    #[test]
    fn bigram_segments_and_csv() {
        let mut h = BigramHistogram::default();
        h.add_segment(&[1, 2, 3]);
        h.add_segment(&[3, 1]);
        assert_eq!(h.total(), 3);
        let mut other = BigramHistogram::from_lengths(&[1, 2]);
        other.merge(&h);
        assert_eq!(other.get(1, 2), 2);
        assert!(h.support_subset_of(&other));
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "len_a,len_b,count\n1,2,1\n2,3,1\n3,1,1\n");
    }

    #[test]
    fn labels_are_copied_per_packet() {
        let cap = capture(&[1, 2, 3, 4], CaptureClass::Interference);
        let wm = make_windows(&cap, 2, 1).unwrap();
        assert_eq!(wm.raw_label_row(1), &[Label::Interference.as_u8(); 2]);
    }
}
