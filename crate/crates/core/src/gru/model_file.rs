//! Line-oriented text model format.
//!
//! ```text
//! cia-gru v1
//! H=<hidden>
//! W=<window>
//! tensor <name> <rows> <cols>
//! <cols floats>            (repeated <rows> times)
//! ...
//! ```
//!
//! Floats are written in shortest round-trip scientific notation. The
//! optional `norm` tensor (1 x 2) holds the min-max scaling bounds.

use std::fmt::Write as _;
use std::path::Path;

use super::{forward, param_count, GruParams, Tensor};
use crate::error::{Error, Result};
use crate::features::Normalization;

pub const MODEL_MAGIC: &str = "cia-gru v1";
const NORM_TENSOR: &str = "norm";

/// A trained network together with the window size and input scaling it
/// was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    pub params: GruParams,
    pub window: usize,
    pub normalization: Option<Normalization>,
}

impl Detector {
    /// Score a window of raw packet lengths.
    pub fn score(&self, lengths: &[f64]) -> Result<f64> {
        if lengths.len() != self.window {
            return Err(Error::Shape {
                expected: self.window,
                actual: lengths.len(),
            });
        }
        let scaled: Vec<f64> = match self.normalization {
            Some(n) => lengths.iter().map(|&v| n.scale(v)).collect(),
            None => lengths.to_vec(),
        };
        forward(&self.params, &scaled).map(|(s, _)| s)
    }
}

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    writeln!(out, "tensor {name} {rows} {cols}").unwrap();
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
}

pub fn write_model(det: &Detector) -> String {
    let h = det.params.hidden();
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC}").unwrap();
    writeln!(out, "H={h}").unwrap();
    writeln!(out, "W={}", det.window).unwrap();
    for t in Tensor::ALL {
        let (r, c) = t.shape(h);
        push_tensor(&mut out, t.name(), r, c, det.params.tensor(t));
    }
    if let Some(n) = det.normalization {
        push_tensor(&mut out, NORM_TENSOR, 1, 2, &[n.min, n.max]);
    }
    out
}

pub fn save_model(det: &Detector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_model(det)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Detector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

fn header_value(line: Option<(usize, &str)>, key: &str) -> Result<usize> {
    let (no, line) = line.ok_or_else(|| Error::ModelFormat(format!("missing {key}= line")))?;
    line.strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::ModelFormat(format!("line {}: expected {key}=<int>, found {line:?}", no + 1)))
}

pub fn parse_model(text: &str) -> Result<Detector> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == MODEL_MAGIC => {}
        Some((_, l)) => return Err(Error::ModelFormat(format!("unsupported header {l:?}, expected {MODEL_MAGIC:?}"))),
        None => return Err(Error::ModelFormat("empty model file".into())),
    }
    let hidden = header_value(lines.next(), "H")?;
    let window = header_value(lines.next(), "W")?;
    if hidden < 1 {
        return Err(Error::ModelFormat("H must be at least 1".into()));
    }
    if window < 1 {
        return Err(Error::ModelFormat("W must be at least 1".into()));
    }

    let mut params = GruParams::zeros(hidden);
    let mut seen = [false; Tensor::ALL.len()];
    let mut normalization = None;

    while let Some((no, line)) = lines.next() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (name, rows, cols) = match fields.as_slice() {
            ["tensor", name, r, c] => {
                let dim = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::ModelFormat(format!("line {}: bad dimension {s:?}", no + 1)))
                };
                (*name, dim(r)?, dim(c)?)
            }
            _ => return Err(Error::ModelFormat(format!("line {}: expected tensor block, found {line:?}", no + 1))),
        };

        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rno, row) = lines
                .next()
                .ok_or_else(|| Error::ModelFormat(format!("tensor {name}: truncated")))?;
            let parsed: Vec<f64> = row
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|f| f.is_finite())
                        .ok_or_else(|| Error::ModelFormat(format!("line {}: bad value {v:?}", rno + 1)))
                })
                .collect::<Result<_>>()?;
            if parsed.len() != cols {
                return Err(Error::ModelFormat(format!(
                    "line {}: tensor {name} row has {} values, expected {cols}",
                    rno + 1,
                    parsed.len()
                )));
            }
            values.extend(parsed);
        }

        if name == NORM_TENSOR {
            if (rows, cols) != (1, 2) {
                return Err(Error::ModelFormat("norm tensor must be 1 x 2".into()));
            }
            normalization = Some(
                Normalization::new(values[0], values[1]).map_err(|e| Error::ModelFormat(format!("norm: {e}")))?,
            );
            continue;
        }
        let tensor =
            Tensor::from_name(name).ok_or_else(|| Error::ModelFormat(format!("unknown tensor {name:?}")))?;
        let slot = Tensor::ALL.iter().position(|&t| t == tensor).unwrap();
        if seen[slot] {
            return Err(Error::ModelFormat(format!("tensor {name} appears twice")));
        }
        let want = tensor.shape(hidden);
        if (rows, cols) != want {
            return Err(Error::ModelFormat(format!(
                "tensor {name} is {rows} x {cols}, expected {} x {} for H={hidden}",
                want.0, want.1
            )));
        }
        params.tensor_mut(tensor).copy_from_slice(&values);
        seen[slot] = true;
    }

    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::ModelFormat(format!("missing tensor {}", Tensor::ALL[i].name())));
    }
    debug_assert_eq!(params.values().len(), param_count(hidden));
    Ok(Detector {
        params,
        window,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "cia-gru v1
H=1
W=3
tensor w_r 1 2
0.5 -0.25
tensor w_z 1 2
0 1
tensor w_h 1 2
1 2
tensor b_r 1 1
0
tensor b_z 1 1
-1
tensor b_h 1 1
0.1
tensor w_out 1 1
3
tensor b_out 1 1
-0.5
tensor norm 1 2
60 1474
";

    #[test]
    fn hand_written_model_loads_and_scores() {
        let det = parse_model(MINIMAL).unwrap();
        assert_eq!(det.params.hidden(), 1);
        assert_eq!(det.window, 3);
        assert_eq!(det.params.tensor(Tensor::CandidateWeights), &[1.0, 2.0]);
        let s = det.score(&[60.0, 767.0, 1474.0]).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert!(matches!(det.score(&[1.0, 2.0]), Err(Error::Shape { expected: 3, actual: 2 })));
    }

    #[test]
    fn round_trip_is_exact() {
        let det = Detector {
            params: GruParams::init(5, 77),
            window: 9,
            normalization: Some(Normalization::new(55.0, 1474.0).unwrap()),
        };
        let text = write_model(&det);
        assert!(text.starts_with("cia-gru v1\nH=5\nW=9\ntensor w_r 5 6\n"));
        assert_eq!(parse_model(&text).unwrap(), det);
        let bare = Detector {
            normalization: None,
            ..det
        };
        assert_eq!(parse_model(&write_model(&bare)).unwrap(), bare);
    }

    #[test]
    fn shape_and_version_errors() {
        let wrong_h = MINIMAL.replace("H=1", "H=2");
        assert!(matches!(parse_model(&wrong_h), Err(Error::ModelFormat(_))));
        let wrong_version = MINIMAL.replace("cia-gru v1", "cia-gru v2");
        assert!(matches!(parse_model(&wrong_version), Err(Error::ModelFormat(_))));
        let missing = MINIMAL.replace("tensor b_out 1 1\n-0.5\n", "");
        assert!(parse_model(&missing).unwrap_err().to_string().contains("b_out"));
        let dup = format!("{MINIMAL}tensor b_out 1 1\n0\n");
        assert!(parse_model(&dup).is_err());
        let short_row = MINIMAL.replace("0.5 -0.25", "0.5");
        assert!(parse_model(&short_row).is_err());
        let nan = MINIMAL.replace("0.5 -0.25", "NaN 1");
        assert!(parse_model(&nan).is_err());
        let unknown = MINIMAL.replace("tensor norm", "tensor bogus");
        assert!(parse_model(&unknown).is_err());
        assert!(parse_model("").is_err());
    }
}
