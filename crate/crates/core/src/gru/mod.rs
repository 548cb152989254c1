//! Single-layer GRU over scalar inputs with a sigmoid output head.
//!
//! Each gate acts on the concatenation `[h_{t-1}, x_t]`, so every gate
//! matrix is `H x (H + 1)` with the input weight in the last column:
//!
//! ```text
//! r_t  = sigmoid(W_r [h_{t-1}, x_t] + b_r)
//! z_t  = sigmoid(W_z [h_{t-1}, x_t] + b_z)
//! h~_t = tanh(W_h [r_t * h_{t-1}, x_t] + b_h)
//! h_t  = z_t * h_{t-1} + (1 - z_t) * h~_t
//! ```
//!
//! Note that `z_t` keeps the *old* state. After the last step the window
//! score is `sigmoid(w_out . h_T + b_out)`.

mod model_file;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use model_file::{load_model, parse_model, save_model, write_model, Detector, MODEL_MAGIC};
pub use train::{predict, train, Adam, EpochRecord, History, TrainConfig};

/// Named parameter blocks, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tensor {
    ResetWeights,
    UpdateWeights,
    CandidateWeights,
    ResetBias,
    UpdateBias,
    CandidateBias,
    OutputWeights,
    OutputBias,
}

impl Tensor {
    pub const ALL: [Tensor; 8] = [
        Tensor::ResetWeights,
        Tensor::UpdateWeights,
        Tensor::CandidateWeights,
        Tensor::ResetBias,
        Tensor::UpdateBias,
        Tensor::CandidateBias,
        Tensor::OutputWeights,
        Tensor::OutputBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::ResetWeights => "w_r",
            Tensor::UpdateWeights => "w_z",
            Tensor::CandidateWeights => "w_h",
            Tensor::ResetBias => "b_r",
            Tensor::UpdateBias => "b_z",
            Tensor::CandidateBias => "b_h",
            Tensor::OutputWeights => "w_out",
            Tensor::OutputBias => "b_out",
        }
    }

    pub fn from_name(name: &str) -> Option<Tensor> {
        Tensor::ALL.into_iter().find(|t| t.name() == name)
    }

    /// `(rows, cols)` for hidden size `h`.
    pub fn shape(self, h: usize) -> (usize, usize) {
        match self {
            Tensor::ResetWeights | Tensor::UpdateWeights | Tensor::CandidateWeights => (h, h + 1),
            Tensor::ResetBias | Tensor::UpdateBias | Tensor::CandidateBias | Tensor::OutputWeights => (1, h),
            Tensor::OutputBias => (1, 1),
        }
    }

    fn offset(self, h: usize) -> usize {
        Tensor::ALL
            .iter()
            .take_while(|&&t| t != self)
            .map(|t| {
                let (r, c) = t.shape(h);
                r * c
            })
            .sum()
    }
}

/// All trainable values in one flat buffer. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    hidden: usize,
    values: Vec<f64>,
}

pub fn param_count(hidden: usize) -> usize {
    3 * hidden * (hidden + 1) + 4 * hidden + 1
}

impl GruParams {
    pub fn zeros(hidden: usize) -> Self {
        GruParams {
            hidden,
            values: vec![0.0; param_count(hidden)],
        }
    }

    /// Uniform `(-k, k)` with `k = 1 / sqrt(H + 1)`.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let k = 1.0 / ((hidden + 1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..param_count(hidden)).map(|_| rng.random_range(-k..k)).collect();
        GruParams { hidden, values }
    }

    pub fn from_values(hidden: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != param_count(hidden) {
            return Err(Error::Shape {
                expected: param_count(hidden),
                actual: values.len(),
            });
        }
        Ok(GruParams { hidden, values })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn tensor(&self, t: Tensor) -> &[f64] {
        let (r, c) = t.shape(self.hidden);
        let off = t.offset(self.hidden);
        &self.values[off..off + r * c]
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        let (r, c) = t.shape(self.hidden);
        let off = t.offset(self.hidden);
        &mut self.values[off..off + r * c]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn add_assign(&mut self, other: &GruParams) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }
}

/// Intermediate values of one cell step, kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCache {
    pub h_prev: Vec<f64>,
    pub x: f64,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `-(y ln s + (1 - y) ln(1 - s))` with `s = sigmoid(logit)`, computed from
/// the logit so it stays finite when the score saturates.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - target * logit + (-logit.abs()).exp().ln_1p()
}

struct Gates<'a> {
    hidden: usize,
    w_r: &'a [f64],
    w_z: &'a [f64],
    w_h: &'a [f64],
    b_r: &'a [f64],
    b_z: &'a [f64],
    b_h: &'a [f64],
}

impl<'a> Gates<'a> {
    fn new(p: &'a GruParams) -> Self {
        Gates {
            hidden: p.hidden,
            w_r: p.tensor(Tensor::ResetWeights),
            w_z: p.tensor(Tensor::UpdateWeights),
            w_h: p.tensor(Tensor::CandidateWeights),
            b_r: p.tensor(Tensor::ResetBias),
            b_z: p.tensor(Tensor::UpdateBias),
            b_h: p.tensor(Tensor::CandidateBias),
        }
    }

    /// One step; writes gate activations and the new state into the out slices.
    fn step(&self, h_prev: &[f64], x: f64, r: &mut [f64], z: &mut [f64], hc: &mut [f64], h_next: &mut [f64]) {
        let n = self.hidden;
        let cols = n + 1;
        for i in 0..n {
            let wr = &self.w_r[i * cols..(i + 1) * cols];
            let wz = &self.w_z[i * cols..(i + 1) * cols];
            let mut ar = wr[n] * x + self.b_r[i];
            let mut az = wz[n] * x + self.b_z[i];
            for j in 0..n {
                ar += wr[j] * h_prev[j];
                az += wz[j] * h_prev[j];
            }
            r[i] = sigmoid(ar);
            z[i] = sigmoid(az);
        }
        for i in 0..n {
            let wh = &self.w_h[i * cols..(i + 1) * cols];
            let mut ah = wh[n] * x + self.b_h[i];
            for j in 0..n {
                ah += wh[j] * r[j] * h_prev[j];
            }
            hc[i] = ah.tanh();
            h_next[i] = z[i] * h_prev[i] + (1.0 - z[i]) * hc[i];
        }
    }
}

/// One GRU step from `h_prev` on input `x`.
pub fn cell_step(params: &GruParams, h_prev: &[f64], x: f64) -> Result<(Vec<f64>, StepCache)> {
    let n = params.hidden;
    if h_prev.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: h_prev.len(),
        });
    }
    if !x.is_finite() || h_prev.iter().any(|v| !v.is_finite()) || !params.is_finite() {
        return Err(Error::Numeric("non-finite value entering cell step".into()));
    }
    let mut cache = StepCache {
        h_prev: h_prev.to_vec(),
        x,
        reset: vec![0.0; n],
        update: vec![0.0; n],
        candidate: vec![0.0; n],
    };
    let mut h_next = vec![0.0; n];
    Gates::new(params).step(h_prev, x, &mut cache.reset, &mut cache.update, &mut cache.candidate, &mut h_next);
    Ok((h_next, cache))
}

/// Everything a forward pass over one window produced.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    hidden: usize,
    /// `h_0 .. h_T`, row-major `(T + 1) x H`.
    states: Vec<f64>,
    reset: Vec<f64>,
    update: Vec<f64>,
    candidate: Vec<f64>,
    inputs: Vec<f64>,
    pub logit: f64,
    pub score: f64,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn reset_gate(&self, t: usize) -> &[f64] {
        &self.reset[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn update_gate(&self, t: usize) -> &[f64] {
        &self.update[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn candidate(&self, t: usize) -> &[f64] {
        &self.candidate[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.steps())
    }
}

fn run(params: &GruParams, window: &[f64]) -> ForwardTrace {
    let n = params.hidden;
    let t_len = window.len();
    let mut tr = ForwardTrace {
        hidden: n,
        states: vec![0.0; (t_len + 1) * n],
        reset: vec![0.0; t_len * n],
        update: vec![0.0; t_len * n],
        candidate: vec![0.0; t_len * n],
        inputs: window.to_vec(),
        logit: 0.0,
        score: 0.0,
    };
    let gates = Gates::new(params);
    for (t, &x) in window.iter().enumerate() {
        let (prev, next) = tr.states.split_at_mut((t + 1) * n);
        let span = t * n..(t + 1) * n;
        gates.step(
            &prev[t * n..],
            x,
            &mut tr.reset[span.clone()],
            &mut tr.update[span.clone()],
            &mut tr.candidate[span],
            &mut next[..n],
        );
    }
    let w_out = params.tensor(Tensor::OutputWeights);
    let b_out = params.tensor(Tensor::OutputBias)[0];
    tr.logit = b_out + w_out.iter().zip(tr.final_state()).map(|(w, h)| w * h).sum::<f64>();
    tr.score = sigmoid(tr.logit);
    tr
}

/// Score one window, starting from `h_0 = 0`.
pub fn forward(params: &GruParams, window: &[f64]) -> Result<(f64, ForwardTrace)> {
    if window.is_empty() {
        return Err(Error::Shape { expected: 1, actual: 0 });
    }
    if window.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in window".into()));
    }
    let tr = run(params, window);
    Ok((tr.score, tr))
}

/// Accumulate `dLoss/dparams` for one sample into `grads`; returns the loss.
fn backward_into(params: &GruParams, window: &[f64], target: f64, grads: &mut GruParams) -> f64 {
    let n = params.hidden;
    let cols = n + 1;
    let tr = run(params, window);
    let loss = bce_with_logit(tr.logit, target);
    let dlogit = tr.score - target;

    let w_out = params.tensor(Tensor::OutputWeights).to_vec();
    let w_r = params.tensor(Tensor::ResetWeights);
    let w_z = params.tensor(Tensor::UpdateWeights);
    let w_h = params.tensor(Tensor::CandidateWeights);

    let (gw, rest) = grads.values.split_at_mut(3 * n * cols);
    let (gw_r, gw) = gw.split_at_mut(n * cols);
    let (gw_z, gw_h) = gw.split_at_mut(n * cols);
    let (gb_r, rest) = rest.split_at_mut(n);
    let (gb_z, rest) = rest.split_at_mut(n);
    let (gb_h, rest) = rest.split_at_mut(n);
    let (gw_out, gb_out) = rest.split_at_mut(n);

    gb_out[0] += dlogit;
    let mut dh: Vec<f64> = w_out.iter().map(|w| w * dlogit).collect();
    for (g, h) in gw_out.iter_mut().zip(tr.final_state()) {
        *g += dlogit * h;
    }

    let mut da_r = vec![0.0; n];
    let mut da_z = vec![0.0; n];
    let mut da_h = vec![0.0; n];
    let mut d_rh = vec![0.0; n];
    let mut dh_prev = vec![0.0; n];

    for t in (0..tr.steps()).rev() {
        let h_prev = tr.state(t);
        let r = tr.reset_gate(t);
        let z = tr.update_gate(t);
        let hc = tr.candidate(t);
        let x = tr.inputs[t];

        for i in 0..n {
            let dz = dh[i] * (h_prev[i] - hc[i]);
            da_z[i] = dz * z[i] * (1.0 - z[i]);
            let dhc = dh[i] * (1.0 - z[i]);
            da_h[i] = dhc * (1.0 - hc[i] * hc[i]);
            dh_prev[i] = dh[i] * z[i];
        }

        // candidate: acts on r * h_prev
        d_rh.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let a = da_h[i];
            let row = &w_h[i * cols..(i + 1) * cols];
            let grow = &mut gw_h[i * cols..(i + 1) * cols];
            for j in 0..n {
                grow[j] += a * r[j] * h_prev[j];
                d_rh[j] += row[j] * a;
            }
            grow[n] += a * x;
            gb_h[i] += a;
        }
        for j in 0..n {
            da_r[j] = d_rh[j] * h_prev[j] * r[j] * (1.0 - r[j]);
            dh_prev[j] += d_rh[j] * r[j];
        }

        for i in 0..n {
            let ar = da_r[i];
            let az = da_z[i];
            let rr = &w_r[i * cols..(i + 1) * cols];
            let rz = &w_z[i * cols..(i + 1) * cols];
            let gr = &mut gw_r[i * cols..(i + 1) * cols];
            for j in 0..n {
                gr[j] += ar * h_prev[j];
                dh_prev[j] += rr[j] * ar + rz[j] * az;
            }
            gr[n] += ar * x;
            let gz = &mut gw_z[i * cols..(i + 1) * cols];
            for j in 0..n {
                gz[j] += az * h_prev[j];
            }
            gz[n] += az * x;
            gb_r[i] += ar;
            gb_z[i] += az;
        }

        std::mem::swap(&mut dh, &mut dh_prev);
    }
    loss
}

/// Samples per work unit. Fixed, so the reduction order never depends on
/// the thread count.
const GRAD_CHUNK: usize = 8;

/// Mean binary cross-entropy over `batch` and its gradient, by
/// backpropagation through time.
pub fn loss_and_gradients(params: &GruParams, batch: &[(&[f64], f64)]) -> Result<(f64, GruParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for (window, target) in batch {
        if !(0.0..=1.0).contains(target) {
            return Err(Error::invalid(format!("target {target} outside [0, 1]")));
        }
        if window.is_empty() {
            return Err(Error::Shape { expected: 1, actual: 0 });
        }
    }
    let partials: Vec<(f64, GruParams)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = GruParams::zeros(params.hidden);
            let loss = chunk
                .iter()
                .map(|(w, y)| backward_into(params, w, *y, &mut g))
                .sum::<f64>();
            (loss, g)
        })
        .collect();

    let mut grads = GruParams::zeros(params.hidden);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        grads.add_assign(g);
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss * inv, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_layout_covers_buffer() {
        for h in [1, 4, 32] {
            let last = Tensor::OutputBias;
            assert_eq!(last.offset(h) + 1, param_count(h));
            let total: usize = Tensor::ALL.iter().map(|t| t.shape(h).0 * t.shape(h).1).sum();
            assert_eq!(total, param_count(h));
        }
        assert_eq!(Tensor::from_name("w_h"), Some(Tensor::CandidateWeights));
        assert_eq!(Tensor::from_name("nope"), None);
    }

    #[test]
    fn zero_network_step() {
        let p = GruParams::zeros(3);
        let (h, cache) = cell_step(&p, &[0.0; 3], 0.7).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(cache.reset, vec![0.5; 3]);
        assert_eq!(cache.update, vec![0.5; 3]);
        assert_eq!(cache.candidate, vec![0.0; 3]);
    }

    #[test]
    fn update_gate_closed_passes_candidate() {
        let mut p = GruParams::zeros(1);
        p.tensor_mut(Tensor::UpdateBias)[0] = -50.0;
        p.tensor_mut(Tensor::ResetBias)[0] = -50.0;
        p.tensor_mut(Tensor::CandidateWeights).copy_from_slice(&[0.0, 1.0]);
        let (h, _) = cell_step(&p, &[0.0], 0.5).unwrap();
        assert!((h[0] - 0.5f64.tanh()).abs() < 1e-12);
        assert!((h[0] - 0.462_117_157_260_009_8).abs() < 1e-12);
    }

    #[test]
    fn saturated_update_gate_freezes_state() {
        let mut p = GruParams::init(4, 3);
        p.tensor_mut(Tensor::UpdateBias).iter_mut().for_each(|b| *b = 800.0);
        let h_prev = [0.3, -0.2, 0.9, -0.7];
        for x in [-3.0, 0.0, 0.4, 10.0] {
            let (h, _) = cell_step(&p, &h_prev, x).unwrap();
            assert_eq!(h, h_prev);
        }
    }

    #[test]
    fn step_rejects_bad_input() {
        let p = GruParams::zeros(2);
        assert!(matches!(cell_step(&p, &[0.0; 2], f64::NAN), Err(Error::Numeric(_))));
        assert!(matches!(cell_step(&p, &[f64::INFINITY, 0.0], 0.0), Err(Error::Numeric(_))));
        assert!(matches!(cell_step(&p, &[0.0; 3], 0.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_network_scores_half() {
        let p = GruParams::zeros(5);
        for w in [vec![0.0; 4], vec![1.0, 0.2, 0.9], vec![0.5; 40]] {
            assert_eq!(forward(&p, &w).unwrap().0, 0.5);
        }
        assert!(forward(&p, &[]).is_err());
    }

    #[test]
    fn trace_matches_cell_steps() {
        let p = GruParams::init(3, 8);
        let window = [0.1, 0.9, 0.4, 0.0];
        let (_, tr) = forward(&p, &window).unwrap();
        let mut h = vec![0.0; 3];
        for (t, &x) in window.iter().enumerate() {
            let (next, cache) = cell_step(&p, &h, x).unwrap();
            assert_eq!(tr.reset_gate(t), &cache.reset[..]);
            assert_eq!(tr.update_gate(t), &cache.update[..]);
            h = next;
            assert_eq!(tr.state(t + 1), &h[..]);
        }
    }

    #[test]
    fn bce_closed_forms() {
        assert!((bce_with_logit(0.0, 0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_with_logit(800.0, 1.0) < 1e-300);
        assert!((bce_with_logit(-800.0, 1.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn output_bias_gradient_is_score_minus_target() {
        let p = GruParams::init(2, 1);
        let w = [0.2, 0.8, 0.3];
        let s = forward(&p, &w).unwrap().0;
        let (_, g) = loss_and_gradients(&p, &[(&w, s)]).unwrap();
        assert_eq!(g.tensor(Tensor::OutputBias)[0], 0.0);
        let (_, g) = loss_and_gradients(&p, &[(&w, 1.0)]).unwrap();
        assert!((g.tensor(Tensor::OutputBias)[0] - (s - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn targets_are_checked() {
        let p = GruParams::zeros(2);
        let w = [0.1, 0.2];
        assert!(matches!(loss_and_gradients(&p, &[(&w, 1.5)]), Err(Error::InvalidArgument(_))));
        assert!(matches!(loss_and_gradients(&p, &[(&w, -0.1)]), Err(Error::InvalidArgument(_))));
        assert!(loss_and_gradients(&p, &[]).is_err());
    }

    #[test]
    fn batch_gradient_is_mean_of_samples() {
        let p = GruParams::init(3, 2);
        let a = [0.1, 0.5, 0.9];
        let b = [0.7, 0.2, 0.4];
        let (la, ga) = loss_and_gradients(&p, &[(&a, 1.0)]).unwrap();
        let (lb, gb) = loss_and_gradients(&p, &[(&b, 0.0)]).unwrap();
        let (l, g) = loss_and_gradients(&p, &[(&a, 1.0), (&b, 0.0)]).unwrap();
        assert!((l - (la + lb) / 2.0).abs() < 1e-15);
        for ((x, y), z) in ga.values().iter().zip(gb.values()).zip(g.values()) {
            assert!(((x + y) / 2.0 - z).abs() < 1e-15);
        }
    }
}
