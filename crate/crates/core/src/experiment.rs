//! Window-size sweep: featurize, split, train and evaluate once per size.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use crate::capture::CaptureSet;
use crate::error::{Error, Result};
use crate::eval::{evaluate, split, EvalReport, SplitReport, DEFAULT_THRESHOLD};
use crate::features::{make_windows_multi, Normalization};
use crate::gru::{predict, train, Detector, GruParams, History, TrainConfig};

pub const SWEEP_CSV_HEADER: &str = "window,accuracy,f1,auc,train_s,infer_ms_per_window";
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_WINDOW: usize = 255;

/// Sizes 3, 23, ..., 243 followed by 255.
pub fn default_sweep() -> Vec<usize> {
    let mut sizes: Vec<usize> = (3..=DEFAULT_WINDOW).step_by(20).collect();
    if sizes.last() != Some(&DEFAULT_WINDOW) {
        sizes.push(DEFAULT_WINDOW);
    }
    sizes
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub windows: Vec<usize>,
    /// `None` means stride equals the window size (non-overlapping).
    pub stride: Option<usize>,
    pub train_fraction: f64,
    pub threshold: f64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            windows: default_sweep(),
            stride: None,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            threshold: DEFAULT_THRESHOLD,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::invalid("sweep list is empty"));
        }
        if let Some(&w) = self.windows.iter().find(|&&w| w < 2) {
            return Err(Error::invalid(format!("window size {w} is below 2")));
        }
        if let Some(s) = self.stride {
            if s == 0 {
                return Err(Error::invalid("stride must be at least 1"));
            }
        }
        self.train.validate()
    }
}

/// Everything produced for one window size.
#[derive(Clone, Debug)]
pub struct WindowOutcome {
    pub window: usize,
    pub report: EvalReport,
    pub split: SplitReport,
    pub history: History,
    pub detector: Detector,
    pub train_s: f64,
}

impl WindowOutcome {
    fn csv_row(&self) -> String {
        let r = &self.report;
        let auc = r.auc.map_or_else(|| "nan".to_string(), |a| a.to_string());
        format!(
            "{},{},{},{},{:.3},{:.6}",
            self.window,
            r.accuracy,
            r.f1,
            auc,
            self.train_s,
            r.inference_time_per_window_s * 1e3
        )
    }
}

/// Run the full pipeline for a single window size.
pub fn run_window(
    benign: &CaptureSet,
    attack: &CaptureSet,
    window: usize,
    cfg: &ExperimentConfig,
) -> Result<WindowOutcome> {
    let stride = cfg.stride.unwrap_or(window);
    if stride > window {
        return Err(Error::invalid(format!("stride {stride} exceeds window size {window}")));
    }
    let dataset = make_windows_multi(&[benign, attack], window, stride)?;
    let parts = split(&dataset, cfg.train_fraction, cfg.train.seed)?;
    if parts.test.is_empty() || parts.train.is_empty() {
        return Err(Error::Validation(format!(
            "{} windows cannot fill both a train and a test split",
            dataset.len()
        )));
    }
    let norm = Normalization::fit(&parts.train)?;
    let train_set = norm.apply(&parts.train)?;
    let test_set = norm.apply(&parts.test)?;

    let init = GruParams::init(cfg.train.hidden, cfg.train.seed);
    let started = Instant::now();
    let (params, history) = train(init, &train_set, Some(&test_set), &cfg.train)?;
    let train_s = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let scores = predict(&params, &test_set)?;
    let infer_s = started.elapsed().as_secs_f64() / test_set.len() as f64;

    let mut report = evaluate(&scores, &test_set.truth(), cfg.threshold)?;
    report.inference_time_per_window_s = infer_s;
    Ok(WindowOutcome {
        window,
        report,
        split: parts.report,
        history,
        detector: Detector {
            params,
            window,
            normalization: Some(norm),
        },
        train_s,
    })
}

/// Sweep every configured window size in ascending order.
///
/// Sizes run one after another so that the timing columns are not skewed by
/// sibling runs competing for cores; each run is parallel internally.
pub fn run_experiment(benign: &CaptureSet, attack: &CaptureSet, cfg: &ExperimentConfig) -> Result<Vec<WindowOutcome>> {
    cfg.validate()?;
    let mut sizes = cfg.windows.clone();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|w| {
            run_window(benign, attack, w, cfg).map_err(|e| Error::AtWindow {
                window: w,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(outcomes: &[WindowOutcome], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for o in outcomes {
        writeln!(w, "{}", o.csv_row())?;
    }
    Ok(())
}

/// Write `sweep.csv`, plus `roc.csv` and `report.json` for the largest size.
pub fn save_artifacts(outcomes: &[WindowOutcome], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("sweep.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    write_sweep_csv(outcomes, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;
    if let Some(last) = outcomes.last() {
        last.report.save_roc_csv(dir.join("roc.csv"))?;
        last.report.save_json(dir.join("report.json"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_has_fourteen_sizes() {
        let s = default_sweep();
        assert_eq!(s.len(), 14);
        assert_eq!(s[..3], [3, 23, 43]);
        assert_eq!(s[12..], [243, 255]);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            windows: vec![1],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            windows: vec![],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
