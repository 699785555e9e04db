//! Error-correcting multilayer perceptron.
//!
//! Four ReLU layers and a single linear neuron estimate the correction `e`
//! from preprocessed features; the output is `hk + e`, where the addition is
//! fixed wiring and carries no weights.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::metrics::ErrorStats;
use crate::rng::{stream, stream_rng};

pub const HIDDEN_LAYERS: usize = 4;
const LAYERS: usize = HIDDEN_LAYERS + 1;
/// Rows per matrix product in batched inference.
const INFERENCE_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFinite { epoch: usize, batch: usize, lr: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Trainable parameters for `m * N + N + 3 (N^2 + N) + (N + 1)` with equal widths.
pub const fn parameter_count_for(m_iota: usize, width: usize) -> usize {
    m_iota * width + width + 3 * (width * width + width) + width + 1
}

/// Input dimension, hidden width and L2 factor used at one refinement level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetPreset {
    pub eta: u32,
    pub m_iota: usize,
    pub width: usize,
    pub l2: f64,
}

pub const PRESETS: [NetPreset; 6] = [
    NetPreset {
        eta: 6,
        m_iota: 20,
        width: 130,
        l2: 5e-6,
    },
    NetPreset {
        eta: 7,
        m_iota: 18,
        width: 130,
        l2: 5e-6,
    },
    NetPreset {
        eta: 8,
        m_iota: 18,
        width: 120,
        l2: 5e-6,
    },
    NetPreset {
        eta: 9,
        m_iota: 18,
        width: 130,
        l2: 5e-6,
    },
    NetPreset {
        eta: 10,
        m_iota: 18,
        width: 130,
        l2: 1e-5,
    },
    NetPreset {
        eta: 11,
        m_iota: 18,
        width: 120,
        l2: 7e-6,
    },
];

pub fn preset(eta: u32) -> Option<NetPreset> {
    PRESETS.iter().copied().find(|p| p.eta == eta)
}

/// Borrowed view of one dense layer; `weights` is `rows x cols` row-major with
/// `rows` inputs and `cols` outputs.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub weights: &'a [f64],
    pub biases: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorNet {
    dims: [usize; LAYERS + 1],
    params: Vec<f64>,
    pub eta: u32,
    pub h: f64,
    pub seed: u64,
}

fn activation_of(layer: usize) -> Activation {
    if layer < HIDDEN_LAYERS {
        Activation::Relu
    } else {
        Activation::Linear
    }
}

fn offsets(dims: &[usize; LAYERS + 1]) -> [(usize, usize); LAYERS] {
    let mut out = [(0, 0); LAYERS];
    let mut at = 0;
    for (l, slot) in out.iter_mut().enumerate() {
        let w = at;
        let b = w + dims[l] * dims[l + 1];
        *slot = (w, b);
        at = b + dims[l + 1];
    }
    out
}

impl ErrorNet {
    /// All-zero network: output equals the `hk` input.
    pub fn zeros(m_iota: usize, widths: [usize; HIDDEN_LAYERS], eta: u32) -> Self {
        let dims = [m_iota, widths[0], widths[1], widths[2], widths[3], 1];
        let count = (0..LAYERS)
            .map(|l| dims[l] * dims[l + 1] + dims[l + 1])
            .sum();
        Self {
            dims,
            params: vec![0.0; count],
            eta,
            h: 1.0 / (1u64 << eta) as f64,
            seed: 0,
        }
    }

    /// He-uniform kernels (limit `sqrt(6 / fan_in)`) and zero biases.
    pub fn new(m_iota: usize, widths: [usize; HIDDEN_LAYERS], eta: u32, seed: u64) -> Self {
        let mut net = Self::zeros(m_iota, widths, eta);
        net.seed = seed;
        let mut rng = stream_rng(seed, stream::INIT, 0);
        let offs = offsets(&net.dims);
        for (l, &(w, b)) in offs.iter().enumerate() {
            let limit = (6.0 / net.dims[l] as f64).sqrt();
            for p in &mut net.params[w..b] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    /// Rebuilds a network from per-layer `(weights, biases)`.
    pub fn from_layers(
        m_iota: usize,
        widths: [usize; HIDDEN_LAYERS],
        eta: u32,
        seed: u64,
        layers: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(m_iota, widths, eta);
        net.seed = seed;
        if layers.len() != LAYERS {
            return Err(NeuralError::Dimension {
                expected: LAYERS,
                got: layers.len(),
            });
        }
        let offs = offsets(&net.dims);
        for (l, (w, b)) in layers.iter().enumerate() {
            let (wo, bo) = offs[l];
            let (rows, cols) = (net.dims[l], net.dims[l + 1]);
            if w.len() != rows * cols {
                return Err(NeuralError::Dimension {
                    expected: rows * cols,
                    got: w.len(),
                });
            }
            if b.len() != cols {
                return Err(NeuralError::Dimension {
                    expected: cols,
                    got: b.len(),
                });
            }
            net.params[wo..bo].copy_from_slice(w);
            net.params[bo..bo + cols].copy_from_slice(b);
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn hidden_widths(&self) -> [usize; HIDDEN_LAYERS] {
        [self.dims[1], self.dims[2], self.dims[3], self.dims[4]]
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerView<'_>> {
        let offs = offsets(&self.dims);
        (0..LAYERS).map(move |l| {
            let (w, b) = offs[l];
            let (rows, cols) = (self.dims[l], self.dims[l + 1]);
            LayerView {
                weights: &self.params[w..b],
                biases: &self.params[b..b + cols],
                rows,
                cols,
                activation: activation_of(l),
            }
        })
    }

    /// Whether each parameter is a kernel weight (as opposed to a bias).
    fn weight_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for (w, b) in offsets(&self.dims) {
            mask[w..b].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// The estimated correction for one preprocessed feature vector.
    pub fn correction(&self, features: &[f64]) -> Result<f64, NeuralError> {
        if features.len() != self.input_dim() {
            return Err(NeuralError::Dimension {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        let mut x = features.to_vec();
        for layer in self.layers() {
            let mut y = layer.biases.to_vec();
            for (i, xi) in x.iter().enumerate() {
                let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                y.iter_mut().zip(row).for_each(|(yj, w)| *yj += xi * w);
            }
            if layer.activation == Activation::Relu {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
        }
        Ok(x[0])
    }

    pub fn forward(&self, features: &[f64], hk: f64) -> Result<f64, NeuralError> {
        Ok(hk + self.correction(features)?)
    }

    /// Corrected curvatures for a row-major feature matrix.
    pub fn batch_forward(&self, features: &[f64], hks: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let out = mlp_batch(&self.dims, &self.params, features, hks.len())?;
        Ok(hks.iter().zip(out).map(|(hk, e)| hk + e).collect())
    }

    /// Single-precision copy used for inference.
    pub fn to_f32(&self) -> FrozenNet {
        FrozenNet {
            dims: self.dims,
            params: self.params.iter().map(|&p| p as f32).collect(),
            eta: self.eta,
            h: self.h,
        }
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        self.params.iter_mut().for_each(|p| *p = *p as f32 as f64);
    }

    /// Loss `RMSE(hk + e - target) + l2 * sum(w^2)` over kernel weights and
    /// its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        data: &Samples<'_>,
        l2: f64,
    ) -> Result<(f64, Vec<f64>), NeuralError> {
        data.check(self.input_dim())?;
        let mut ws = Workspace::new(&self.dims, data.len());
        let mut grad = vec![0.0; self.params.len()];
        let (sq, _, _) = ws.batch(self, data.features, data.hk, data.target, &mut grad);
        let mask = self.weight_mask();
        let mut penalty = 0.0;
        for ((g, &p), &is_w) in grad.iter_mut().zip(&self.params).zip(&mask) {
            if is_w {
                penalty += p * p;
                *g += 2.0 * l2 * p;
            }
        }
        Ok(((sq / data.len() as f64).sqrt() + l2 * penalty, grad))
    }
}

/// Row-major matrix product `c = a (m x k) * b (k x n)`, overwriting `c`.
trait Gemm: Copy + Default + PartialOrd + core::ops::Add<Output = Self> {
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);
}

impl Gemm for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: the asserted lengths cover every row-major index accessed.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Gemm for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: the asserted lengths cover every row-major index accessed.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

/// Correction outputs for `rows` inputs, processed in fixed-size blocks.
fn mlp_batch<T: Gemm>(
    dims: &[usize; LAYERS + 1],
    params: &[T],
    features: &[T],
    rows: usize,
) -> Result<Vec<T>, NeuralError> {
    let m = dims[0];
    if features.len() != rows * m {
        return Err(NeuralError::Dimension {
            expected: rows * m,
            got: features.len(),
        });
    }
    let offs = offsets(dims);
    let widest = dims.iter().copied().max().unwrap_or(1);
    let mut a = vec![T::default(); INFERENCE_BLOCK * widest];
    let mut b = vec![T::default(); INFERENCE_BLOCK * widest];
    let mut out = Vec::with_capacity(rows);
    for block in features.chunks(INFERENCE_BLOCK * m) {
        let r = block.len() / m;
        a[..block.len()].copy_from_slice(block);
        for l in 0..LAYERS {
            let (k, n) = (dims[l], dims[l + 1]);
            let (w, bias) = offs[l];
            T::gemm(r, k, n, &a, &params[w..bias], &mut b);
            let bias = &params[bias..bias + n];
            for row in b[..r * n].chunks_exact_mut(n) {
                for (v, &bj) in row.iter_mut().zip(bias) {
                    *v = *v + bj;
                    if l < HIDDEN_LAYERS && !(*v > T::default()) {
                        *v = T::default();
                    }
                }
            }
            core::mem::swap(&mut a, &mut b);
        }
        out.extend_from_slice(&a[..r]);
    }
    Ok(out)
}

/// Single-precision inference copy of an [`ErrorNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenNet {
    dims: [usize; LAYERS + 1],
    params: Vec<f32>,
    pub eta: u32,
    pub h: f64,
}

impl FrozenNet {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn forward(&self, features: &[f64], hk: f64) -> Result<f64, NeuralError> {
        Ok(self.batch_forward(features, &[hk])?[0])
    }

    /// Corrections evaluated in `f32`; the skip addition is done in `f64`.
    pub fn batch_forward(&self, features: &[f64], hks: &[f64]) -> Result<Vec<f64>, NeuralError> {
        let x: Vec<f32> = features.iter().map(|&v| v as f32).collect();
        let out = mlp_batch(&self.dims, &self.params, &x, hks.len())?;
        Ok(hks.iter().zip(out).map(|(hk, e)| hk + e as f64).collect())
    }
}

/// Anything that maps preprocessed features plus `hk` to a corrected `hk`.
pub trait Corrector {
    fn input_dim(&self) -> usize;
    fn resolution(&self) -> f64;
    fn predict(&self, features: &[f64], hks: &[f64]) -> Result<Vec<f64>, NeuralError>;
}

impl Corrector for ErrorNet {
    fn input_dim(&self) -> usize {
        ErrorNet::input_dim(self)
    }
    fn resolution(&self) -> f64 {
        self.h
    }
    fn predict(&self, features: &[f64], hks: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.batch_forward(features, hks)
    }
}

impl Corrector for FrozenNet {
    fn input_dim(&self) -> usize {
        FrozenNet::input_dim(self)
    }
    fn resolution(&self) -> f64 {
        self.h
    }
    fn predict(&self, features: &[f64], hks: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.batch_forward(features, hks)
    }
}

/// Borrowed training or evaluation set: row-major preprocessed features,
/// numerical `hk` and target `hk*` per row.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub features: &'a [f64],
    pub hk: &'a [f64],
    pub target: &'a [f64],
}

impl Samples<'_> {
    pub fn len(&self) -> usize {
        self.hk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hk.is_empty()
    }

    fn check(&self, dim: usize) -> Result<(), NeuralError> {
        let n = self.hk.len();
        if self.target.len() != n {
            return Err(NeuralError::Dimension {
                expected: n,
                got: self.target.len(),
            });
        }
        if self.features.len() != n * dim {
            return Err(NeuralError::Dimension {
                expected: n * dim,
                got: self.features.len(),
            });
        }
        Ok(())
    }
}

/// Error statistics of `net` on `data`, evaluated in `f64`.
pub fn evaluate(net: &ErrorNet, data: &Samples<'_>) -> Result<ErrorStats, NeuralError> {
    data.check(net.input_dim())?;
    let pred = net.batch_forward(data.features, data.hk)?;
    Ok(ErrorStats::new(&pred, data.target))
}

/// Activations and deltas for one mini-batch.
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
    wt: Vec<f64>,
    at: Vec<f64>,
    gw: Vec<f64>,
}

impl Workspace {
    fn new(dims: &[usize; LAYERS + 1], batch: usize) -> Self {
        let widest = dims.iter().copied().max().unwrap_or(1);
        Self {
            acts: dims.iter().map(|&d| vec![0.0; batch * d]).collect(),
            delta: vec![0.0; batch * widest],
            back: vec![0.0; batch * widest],
            wt: vec![0.0; widest * widest],
            at: vec![0.0; batch * widest],
            gw: vec![0.0; widest * widest],
        }
    }

    /// Forward and backward pass of the RMSE term; overwrites `grad` and
    /// returns (sum of squared errors, sum of absolute errors, max error).
    fn batch(
        &mut self,
        net: &ErrorNet,
        x: &[f64],
        hk: &[f64],
        target: &[f64],
        grad: &mut [f64],
    ) -> (f64, f64, f64) {
        let dims = &net.dims;
        let offs = offsets(dims);
        let r = hk.len();
        self.acts[0][..r * dims[0]].copy_from_slice(x);
        for l in 0..LAYERS {
            let (k, n) = (dims[l], dims[l + 1]);
            let (w, b) = offs[l];
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let out = &mut tail[0][..r * n];
            f64::gemm(r, k, n, &head[l], &net.params[w..b], out);
            let bias = &net.params[b..b + n];
            for row in out.chunks_exact_mut(n) {
                for (v, &bj) in row.iter_mut().zip(bias) {
                    *v += bj;
                    if l < HIDDEN_LAYERS && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        let (mut sq, mut abs, mut max) = (0.0, 0.0, 0.0f64);
        let eps = &self.acts[LAYERS];
        for i in 0..r {
            let e = hk[i] + eps[i] - target[i];
            self.delta[i] = e;
            sq += e * e;
            abs += e.abs();
            max = max.max(e.abs());
        }
        let rmse = (sq / r as f64).sqrt();
        let scale = if rmse > 0.0 {
            1.0 / (r as f64 * rmse)
        } else {
            0.0
        };
        self.delta[..r].iter_mut().for_each(|d| *d *= scale);

        for l in (0..LAYERS).rev() {
            let (k, n) = (dims[l], dims[l + 1]);
            let (w, b) = offs[l];
            let a = &self.acts[l][..r * k];
            let d = &self.delta[..r * n];
            transpose(a, r, k, &mut self.at);
            f64::gemm(k, r, n, &self.at, d, &mut self.gw);
            grad[w..b].copy_from_slice(&self.gw[..k * n]);
            let gb = &mut grad[b..b + n];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in d.chunks_exact(n) {
                gb.iter_mut().zip(row).for_each(|(g, v)| *g += v);
            }
            if l > 0 {
                transpose(&net.params[w..b], k, n, &mut self.wt);
                f64::gemm(r, n, k, d, &self.wt, &mut self.back);
                for (v, &act) in self.back[..r * k].iter_mut().zip(a) {
                    if act <= 0.0 {
                        *v = 0.0;
                    }
                }
                core::mem::swap(&mut self.delta, &mut self.back);
            }
        }
        (sq, abs, max)
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_init: f64,
    pub lr_min: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 1000,
            lr_init: 1.5e-4,
            lr_min: 1e-5,
            lr_patience: 15,
            early_stop_patience: 50,
            l2: 5e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(NeuralError::InvalidConfig(
                "batch size and epoch limit must be positive",
            ));
        }
        if !(0.0 < self.lr_min && self.lr_min <= self.lr_init) {
            return Err(NeuralError::InvalidConfig("need 0 < lr_min <= lr_init"));
        }
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return Err(NeuralError::InvalidConfig("patiences must be at least 1"));
        }
        if !(self.l2 >= 0.0) {
            return Err(NeuralError::InvalidConfig("l2 factor must be non-negative"));
        }
        Ok(())
    }
}

/// Adam moments with the `lr * sqrt(1 - b2^t) / (1 - b1^t)` step.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let lr_t = lr * (1.0 - Self::BETA2.powi(self.t)).sqrt() / (1.0 - Self::BETA1.powi(self.t));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + Self::EPSILON);
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_rmse: f64,
    pub train_mae: f64,
    pub valid_rmse: f64,
    pub valid_mae: f64,
    pub valid_maxae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochLimit,
    EarlyStop,
    Callback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub net: ErrorNet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop: StopReason,
}

/// Validation MAE must drop by at least this much to count as progress.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

/// Mini-batch Adam on RMSE plus L2, halving the rate when validation MAE
/// stalls and stopping early; returns the best-validation weights.
/// `on_epoch` sees each history row and may end training.
pub fn train(
    init: ErrorNet,
    train_set: &Samples<'_>,
    valid_set: &Samples<'_>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) -> Control,
) -> Result<Trained, NeuralError> {
    cfg.validate()?;
    let dim = init.input_dim();
    train_set.check(dim)?;
    valid_set.check(dim)?;
    if train_set.is_empty() {
        return Err(NeuralError::EmptySet("training"));
    }
    if valid_set.is_empty() {
        return Err(NeuralError::EmptySet("validation"));
    }
    let mut net = init;
    let mask = net.weight_mask();
    let mut adam = Adam::new(net.params.len());
    let mut grad = vec![0.0; net.params.len()];
    let bs = cfg.batch_size.min(train_set.len());
    let mut ws = Workspace::new(&net.dims, bs);
    let mut bx = vec![0.0; bs * dim];
    let (mut bh, mut bt) = (vec![0.0; bs], vec![0.0; bs]);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = stream_rng(cfg.seed, stream::SHUFFLE, 0);

    let mut lr = cfg.lr_init;
    let mut best = (f64::INFINITY, net.clone(), 0usize);
    let (mut since_best, mut since_lr) = (0usize, 0usize);
    let mut history = Vec::new();
    let mut stop = StopReason::EpochLimit;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut sq, mut abs) = (0.0, 0.0);
        for (bi, chunk) in order.chunks(bs).enumerate() {
            let r = chunk.len();
            for (slot, &i) in chunk.iter().enumerate() {
                bx[slot * dim..(slot + 1) * dim]
                    .copy_from_slice(&train_set.features[i * dim..(i + 1) * dim]);
                bh[slot] = train_set.hk[i];
                bt[slot] = train_set.target[i];
            }
            let (s, a, _) = ws.batch(&net, &bx[..r * dim], &bh[..r], &bt[..r], &mut grad);
            if !s.is_finite() {
                return Err(NeuralError::NonFinite {
                    epoch,
                    batch: bi,
                    lr,
                });
            }
            sq += s;
            abs += a;
            if cfg.l2 > 0.0 {
                for ((g, &p), &is_w) in grad.iter_mut().zip(&net.params).zip(&mask) {
                    if is_w {
                        *g += 2.0 * cfg.l2 * p;
                    }
                }
            }
            adam.step(&mut net.params, &grad, lr);
        }
        let n = train_set.len() as f64;
        let valid = evaluate(&net, valid_set)?;
        if !valid.mae.is_finite() {
            return Err(NeuralError::NonFinite {
                epoch,
                batch: usize::MAX,
                lr,
            });
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_rmse: (sq / n).sqrt(),
            train_mae: abs / n,
            valid_rmse: valid.rmse,
            valid_mae: valid.mae,
            valid_maxae: valid.maxae,
        };
        history.push(record);

        if valid.mae <= best.0 - MIN_IMPROVEMENT {
            best = (valid.mae, net.clone(), epoch);
            since_best = 0;
            since_lr = 0;
        } else {
            since_best += 1;
            since_lr += 1;
        }
        if on_epoch(&record) == Control::Stop {
            stop = StopReason::Callback;
            break;
        }
        if since_best >= cfg.early_stop_patience {
            stop = StopReason::EarlyStop;
            break;
        }
        if since_lr >= cfg.lr_patience && lr > cfg.lr_min {
            lr = (lr * 0.5).max(cfg.lr_min);
            since_lr = 0;
        }
    }
    Ok(Trained {
        net: best.1,
        history,
        best_epoch: best.2,
        stop,
    })
}
