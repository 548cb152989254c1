//! Train/test splitting and binary-classification metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::WindowMatrix;

pub const ROC_CSV_HEADER: &str = "threshold,fpr,tpr";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    /// Scores at or above this value are called positive. The first point
    /// uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Confusion matrix at one threshold plus threshold-free ROC/AUC.
///
/// Rates whose denominator is zero are reported as 0; `auc` is `None`
/// unless both classes are present.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub auc: Option<f64>,
    #[serde(skip)]
    pub roc_points: Vec<RocPoint>,
    /// Wall-clock seconds per window; filled in by whoever timed inference.
    pub inference_time_per_window_s: f64,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Key/value JSON; timing fields are listed as non-reproducible.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report is plain data");
        v["windows"] = self.total().into();
        v["nondeterministic_fields"] = serde_json::json!(["inference_time_per_window_s"]);
        v
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).expect("serializable");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn save_roc_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{ROC_CSV_HEADER}").map_err(io)?;
        for p in &self.roc_points {
            writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// ROC points by descending threshold, from `(0, 0)` to `(1, 1)`.
/// Tied scores move both rates in a single step.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<Vec<RocPoint>> {
    if scores.len() != truth.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: truth.len(),
        });
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: ratio(fp, neg),
            tpr: ratio(tp, pos),
        });
    }
    Ok(points)
}

/// Trapezoidal area under a ROC polyline.
pub fn auc_trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Score-vs-truth metrics. A window is called positive when its score is
/// at or above `threshold`.
pub fn evaluate(scores: &[f64], truth: &[bool], threshold: f64) -> Result<EvalReport> {
    if scores.len() != truth.len() {
        return Err(Error::Shape {
            expected: scores.len(),
            actual: truth.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::invalid("no scores to evaluate"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &t) in scores.iter().zip(truth) {
        match (s >= threshold, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let roc_points = roc_curve(scores, truth)?;
    let has_both = tp + fn_ > 0 && fp + tn > 0;
    let auc = has_both.then(|| auc_trapezoid(&roc_points));

    let tpr = ratio(tp, tp + fn_);
    let fpr = ratio(fp, fp + tn);
    let precision = ratio(tp, tp + fp);
    let f1 = if precision + tpr > 0.0 {
        2.0 * precision * tpr / (precision + tpr)
    } else {
        0.0
    };
    Ok(EvalReport {
        threshold,
        tp,
        fp,
        tn,
        fn_,
        accuracy: ratio(tp + tn, scores.len()),
        precision,
        f1,
        fpr,
        fnr: if tp + fn_ > 0 { 1.0 - tpr } else { 0.0 },
        tpr,
        tnr: if fp + tn > 0 { 1.0 - fpr } else { 0.0 },
        auc,
        roc_points,
        inference_time_per_window_s: 0.0,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SplitReport {
    pub train_positive: usize,
    pub train_negative: usize,
    pub test_positive: usize,
    pub test_negative: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: WindowMatrix,
    pub test: WindowMatrix,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub report: SplitReport,
}

/// Seeded window-level shuffle split. The train side gets
/// `floor(n * train_fraction)` windows.
pub fn split(dataset: &WindowMatrix, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} must lie in (0, 1)")));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    let n_train = ((n as f64 * train_fraction) + 1e-9).floor() as usize;
    let (train_idx, test_idx) = order.split_at(n_train.min(n));

    let truth = dataset.truth();
    let count = |idx: &[usize]| {
        let pos = idx.iter().filter(|&&i| truth[i]).count();
        (pos, idx.len() - pos)
    };
    let (train_positive, train_negative) = count(train_idx);
    let (test_positive, test_negative) = count(test_idx);
    let mut warnings = Vec::new();
    for (side, pos, neg) in [("train", train_positive, train_negative), ("test", test_positive, test_negative)] {
        if pos == 0 {
            warnings.push(format!("{side} split has no interference windows"));
        }
        if neg == 0 {
            warnings.push(format!("{side} split has no normal windows"));
        }
    }
    Ok(Split {
        train: dataset.select(train_idx),
        test: dataset.select(test_idx),
        train_indices: train_idx.to_vec(),
        test_indices: test_idx.to_vec(),
        report: SplitReport {
            train_positive,
            train_negative,
            test_positive,
            test_negative,
            warnings,
        },
    })
}
