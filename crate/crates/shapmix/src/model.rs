//! Deterministic two-layer MLP classifier on pooled skeleton features.
//!
//! Features of a sequence are the concatenation of a **pose** block (per
//! `(channel, joint, performer)` mean over frames) and a **motion** block
//! (mean absolute frame-to-frame difference), giving `D = 2·C·V·M` inputs.
//! The network is `logits = W2·relu(W1·x + b1) + b2` with analytic
//! gradients, plain or balanced-softmax cross-entropy over soft labels, and
//! SGD with momentum under a milestone step schedule.
//!
//! Balanced softmax shifts each class logit by `ln n_c − ln n_min` before
//! the softmax in the loss. Subtracting `ln n_min` instead of using raw
//! `ln n_c` changes nothing mathematically (softmax is shift-invariant) but
//! makes every adjustment exactly `0.0` for balanced counts, so the
//! balanced loss is bit-for-bit the plain one when counts are equal.
//!
//! Everything is computed in `f64`; checkpoints store parameters as
//! little-endian `f32`.

use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dims, LabeledDataset, SkeletonSequence};
use crate::error::{Error, Result};
use crate::numeric::softmax;
use crate::rng::{derive_rng, StreamId};

/// Identifier of the feature extractor baked into checkpoints.
pub const FEATURE_KIND: &str = "mean_pose_motion";

/// Probabilities are clamped to at least this before `ln` in the loss.
pub const LOG_EPS: f64 = 1e-12;

/// Feature dimension for sequences of the given shape: pose + motion blocks.
pub fn feature_dim(dims: Dims) -> usize {
    2 * dims.channels * dims.joints * dims.performers
}

/// Extract the pooled feature vector of one sequence.
///
/// Layout: pose block first (`(c, v, m)` C-order), then the motion block in
/// the same order. Single-frame sequences get an all-zero motion block.
pub fn extract_features(sequence: &SkeletonSequence) -> Array1<f64> {
    let dims = sequence.dims();
    let arr = sequence.array();
    let block = dims.channels * dims.joints * dims.performers;
    let mut features = Array1::<f64>::zeros(2 * block);
    let t_count = dims.frames as f64;
    for c in 0..dims.channels {
        for v in 0..dims.joints {
            for m in 0..dims.performers {
                let idx = (c * dims.joints + v) * dims.performers + m;
                let mut pose = 0.0f64;
                let mut motion = 0.0f64;
                let mut prev = 0.0f64;
                for t in 0..dims.frames {
                    let x = f64::from(arr[[c, t, v, m]]);
                    pose += x;
                    if t > 0 {
                        motion += (x - prev).abs();
                    }
                    prev = x;
                }
                features[idx] = pose / t_count;
                features[block + idx] = if dims.frames > 1 {
                    motion / (t_count - 1.0)
                } else {
                    0.0
                };
            }
        }
    }
    features
}

/// Stack features of every sample into a `(N, D)` matrix.
pub fn features_matrix(dataset: &LabeledDataset) -> Array2<f64> {
    let d = feature_dim(dataset.dims());
    let mut out = Array2::<f64>::zeros((dataset.len(), d));
    for (i, sample) in dataset.samples().iter().enumerate() {
        out.row_mut(i).assign(&extract_features(&sample.sequence));
    }
    out
}

/// MLP parameters, all `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `(D, H)`.
    pub w1: Array2<f64>,
    /// `(H,)`.
    pub b1: Array1<f64>,
    /// `(H, K)`.
    pub w2: Array2<f64>,
    /// `(K,)`.
    pub b2: Array1<f64>,
}

impl ModelParams {
    /// He-initialized parameters: `W ~ N(0, sqrt(2 / fan_in))`, zero biases.
    /// Weights are drawn from the model-init stream of `seed`, `w1`
    /// row-major first, then `w2`.
    pub fn init(seed: u64, input_dim: usize, hidden: usize, num_classes: usize) -> ModelParams {
        let mut rng = derive_rng(seed, StreamId::ModelInit, &[]);
        let n1 = Normal::new(0.0, (2.0 / input_dim as f64).sqrt()).expect("valid std");
        let w1 = Array2::from_shape_fn((input_dim, hidden), |_| n1.sample(&mut rng));
        let n2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid std");
        let w2 = Array2::from_shape_fn((hidden, num_classes), |_| n2.sample(&mut rng));
        ModelParams {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(num_classes),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|x| x.is_finite())
            && self.b1.iter().all(|x| x.is_finite())
            && self.w2.iter().all(|x| x.is_finite())
            && self.b2.iter().all(|x| x.is_finite())
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Pre-activation of the hidden layer, `(B, H)`.
    pub hidden_pre: Array2<f64>,
    /// `relu(hidden_pre)`, `(B, H)`.
    pub hidden: Array2<f64>,
    /// `(B, K)`.
    pub logits: Array2<f64>,
}

/// Forward pass over a feature batch `(B, D)`.
pub fn forward_batch(params: &ModelParams, x: &Array2<f64>) -> ForwardCache {
    let hidden_pre = x.dot(&params.w1) + &params.b1;
    let hidden = hidden_pre.mapv(|z| if z > 0.0 { z } else { 0.0 });
    let logits = hidden.dot(&params.w2) + &params.b2;
    ForwardCache {
        hidden_pre,
        hidden,
        logits,
    }
}

/// Plain softmax probabilities of one sequence (no balancing adjustment —
/// this is the model's confidence, used for prediction and saliency).
pub fn forward_one(params: &ModelParams, features: &Array1<f64>) -> Vec<f64> {
    let hidden = features.dot(&params.w1) + &params.b1;
    let hidden = hidden.mapv(|z| if z > 0.0 { z } else { 0.0 });
    let logits = hidden.dot(&params.w2) + &params.b2;
    softmax(logits.as_slice().expect("contiguous"))
}

/// Argmax prediction per row; ties resolve to the lowest class id.
pub fn predict(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Loss flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Plain cross-entropy.
    Ce,
    /// Balanced softmax: logits shifted by `ln n_c − ln n_min`.
    BalancedSoftmax,
}

/// Loss configuration: the mode plus the training class counts the balanced
/// variant needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub mode: LossMode,
    pub class_counts: Vec<usize>,
}

impl LossConfig {
    pub fn new(mode: LossMode, class_counts: Vec<usize>) -> LossConfig {
        LossConfig { mode, class_counts }
    }

    /// Per-class logit adjustments. Plain CE: all zero. Balanced softmax:
    /// `ln n_c − ln n_min`, exactly `0.0` for every class when counts are
    /// balanced.
    pub fn adjustments(&self, num_classes: usize) -> Result<Vec<f64>> {
        if self.class_counts.len() != num_classes {
            return Err(Error::Config(format!(
                "{} class counts for {num_classes} classes",
                self.class_counts.len()
            )));
        }
        match self.mode {
            LossMode::Ce => Ok(vec![0.0; num_classes]),
            LossMode::BalancedSoftmax => {
                if let Some(zero) = self.class_counts.iter().position(|&n| n == 0) {
                    return Err(Error::Config(format!(
                        "balanced softmax needs every class present in training; \
                         class {zero} has 0 samples"
                    )));
                }
                let min = *self.class_counts.iter().min().expect("non-empty") as f64;
                Ok(self
                    .class_counts
                    .iter()
                    .map(|&n| (n as f64).ln() - min.ln())
                    .collect())
            }
        }
    }
}

/// Row-wise softmax of `logits + adjustments`.
pub fn adjusted_probs(logits: &Array2<f64>, adjustments: &[f64]) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        for (z, &a) in row.iter_mut().zip(adjustments) {
            *z += a;
        }
        let p = softmax(row.as_slice().expect("contiguous"));
        for (z, p) in row.iter_mut().zip(p) {
            *z = p;
        }
    }
    out
}

/// Mean cross-entropy `−Σ y·ln(max(p, ε))` over rows of soft targets.
pub fn cross_entropy_from_probs(probs: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let per_row: f64 = probs
        .rows()
        .into_iter()
        .zip(targets.rows())
        .map(|(p, y)| -> f64 {
            p.iter()
                .zip(y.iter())
                .map(|(&p, &y)| if y == 0.0 { 0.0 } else { -y * p.max(LOG_EPS).ln() })
                .sum()
        })
        .sum();
    per_row / probs.nrows() as f64
}

/// Convenience: adjusted probabilities + mean loss in one call.
pub fn batch_loss(
    logits: &Array2<f64>,
    targets: &Array2<f64>,
    adjustments: &[f64],
) -> (Array2<f64>, f64) {
    let probs = adjusted_probs(logits, adjustments);
    let loss = cross_entropy_from_probs(&probs, targets);
    (probs, loss)
}

/// Gradients of the mean loss with respect to every parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Gradients {
        Gradients {
            w1: Array2::zeros(params.w1.raw_dim()),
            b1: Array1::zeros(params.b1.raw_dim()),
            w2: Array2::zeros(params.w2.raw_dim()),
            b2: Array1::zeros(params.b2.raw_dim()),
        }
    }

    /// `self += scale · other`.
    pub fn axpy(&mut self, scale: f64, other: &Gradients) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().all(|x| x.is_finite())
            && self.b1.iter().all(|x| x.is_finite())
            && self.w2.iter().all(|x| x.is_finite())
            && self.b2.iter().all(|x| x.is_finite())
    }
}

/// Backward pass for the mean cross-entropy over a batch.
///
/// With soft targets summing to 1 per row, `∂L/∂z = (P_adj − Y) / B`; the
/// rest is the usual chain through the two linear layers and the ReLU.
pub fn backward_batch(
    params: &ModelParams,
    x: &Array2<f64>,
    cache: &ForwardCache,
    probs: &Array2<f64>,
    targets: &Array2<f64>,
) -> Gradients {
    let batch = x.nrows() as f64;
    let dz = (probs - targets) / batch;
    let dw2 = cache.hidden.t().dot(&dz);
    let db2 = dz.sum_axis(Axis(0));
    let dh = dz.dot(&params.w2.t());
    let dh_pre = &dh * &cache.hidden_pre.mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
    let dw1 = x.t().dot(&dh_pre);
    let db1 = dh_pre.sum_axis(Axis(0));
    Gradients {
        w1: dw1,
        b1: db1,
        w2: dw2,
        b2: db2,
    }
}

/// SGD-with-momentum configuration and milestone learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    /// Multiplier applied at each milestone.
    pub decay_factor: f64,
    /// Epochs (0-based) at which the rate decays; `lr(e)` multiplies
    /// `decay_factor` once per milestone `m` with `e >= m`.
    pub milestones: Vec<usize>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 0.1,
            momentum: 0.9,
            decay_factor: 0.1,
            milestones: vec![60, 80],
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!(
                "base learning rate must be positive, got {}",
                self.base_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.decay_factor.is_finite() && self.decay_factor > 0.0 && self.decay_factor <= 1.0)
        {
            return Err(Error::Config(format!(
                "decay factor must be in (0, 1], got {}",
                self.decay_factor
            )));
        }
        Ok(())
    }

    /// Learning rate at a 0-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base_lr * self.decay_factor.powi(hits as i32)
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    v_w1: Array2<f64>,
    v_b1: Array1<f64>,
    v_w2: Array2<f64>,
    v_b2: Array1<f64>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> OptimizerState {
        OptimizerState {
            v_w1: Array2::zeros(params.w1.raw_dim()),
            v_b1: Array1::zeros(params.b1.raw_dim()),
            v_w2: Array2::zeros(params.w2.raw_dim()),
            v_b2: Array1::zeros(params.b2.raw_dim()),
        }
    }
}

/// One SGD step: `v ← μ·v + g`, `θ ← θ − lr·v`.
pub fn sgd_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
) {
    state.v_w1.mapv_inplace(|v| v * momentum);
    state.v_w1 += &grads.w1;
    params.w1.scaled_add(-lr, &state.v_w1);

    state.v_b1.mapv_inplace(|v| v * momentum);
    state.v_b1 += &grads.b1;
    params.b1.scaled_add(-lr, &state.v_b1);

    state.v_w2.mapv_inplace(|v| v * momentum);
    state.v_w2 += &grads.w2;
    params.w2.scaled_add(-lr, &state.v_w2);

    state.v_b2.mapv_inplace(|v| v * momentum);
    state.v_b2 += &grads.b2;
    params.b2.scaled_add(-lr, &state.v_b2);
}

/// Checkpoint metadata, serialized as a single JSON line ahead of the
/// binary payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub dims: Dims,
    pub feature_kind: String,
    pub feature_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub loss_mode: LossMode,
    /// Training-set class counts (drives balanced softmax and the shot
    /// buckets reported by evaluation).
    pub class_counts: Vec<usize>,
    pub seed: u64,
    pub epochs_trained: usize,
}

const CHECKPOINT_VERSION: u32 = 1;

impl CheckpointHeader {
    pub fn new(
        dims: Dims,
        hidden: usize,
        num_classes: usize,
        class_names: Vec<String>,
        loss_mode: LossMode,
        class_counts: Vec<usize>,
        seed: u64,
        epochs_trained: usize,
    ) -> CheckpointHeader {
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            dims,
            feature_kind: FEATURE_KIND.to_string(),
            feature_dim: feature_dim(dims),
            hidden,
            num_classes,
            class_names,
            loss_mode,
            class_counts,
            seed,
            epochs_trained,
        }
    }
}

/// Write a checkpoint: one JSON header line, then the parameters as
/// little-endian `f32` in declared order — `w1` row-major, `b1`, `w2`
/// row-major, `b2`.
pub fn save_checkpoint(path: &Path, params: &ModelParams, header: &CheckpointHeader) -> Result<()> {
    if header.feature_dim != params.input_dim()
        || header.hidden != params.hidden()
        || header.num_classes != params.num_classes()
    {
        return Err(Error::DimMismatch(format!(
            "header declares ({}, {}, {}) but params are ({}, {}, {})",
            header.feature_dim,
            header.hidden,
            header.num_classes,
            params.input_dim(),
            params.hidden(),
            params.num_classes()
        )));
    }
    let mut bytes = serde_json::to_vec(header).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    let tensors: [&[f64]; 4] = [
        params.w1.as_slice().expect("standard layout"),
        params.b1.as_slice().expect("standard layout"),
        params.w2.as_slice().expect("standard layout"),
        params.b2.as_slice().expect("standard layout"),
    ];
    for tensor in tensors {
        for &value in tensor {
            bytes.extend_from_slice(&(value as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Data(format!("{}: missing checkpoint header line", path.display())))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::json(path, e))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
            header.version
        )));
    }
    if header.feature_kind != FEATURE_KIND {
        return Err(Error::Data(format!(
            "checkpoint uses feature extractor {:?}, this build provides {FEATURE_KIND:?}",
            header.feature_kind
        )));
    }
    if header.feature_dim != feature_dim(header.dims) {
        return Err(Error::DimMismatch(format!(
            "checkpoint feature_dim {} does not match dims {:?}",
            header.feature_dim, header.dims
        )));
    }

    let payload = &bytes[newline + 1..];
    if payload.len() % 4 != 0 {
        return Err(Error::Data(format!(
            "{}: payload length {} is not a multiple of 4",
            path.display(),
            payload.len()
        )));
    }
    let (d, h, k) = (header.feature_dim, header.hidden, header.num_classes);
    let expected = d * h + h + h * k + k;
    let found = payload.len() / 4;
    if found < expected {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::DimMismatch(format!(
            "{}: payload holds {found} values but the header requires {expected}",
            path.display()
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    if let Some(bad) = values.clone().find(|x| !x.is_finite()) {
        return Err(Error::Data(format!(
            "{}: checkpoint payload contains non-finite value {bad}",
            path.display()
        )));
    }
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
    let params = ModelParams {
        w1: Array2::from_shape_vec((d, h), take(d * h)).expect("shape checked"),
        b1: Array1::from_vec(take(h)),
        w2: Array2::from_shape_vec((h, k), take(h * k)).expect("shape checked"),
        b2: Array1::from_vec(take(k)),
    };
    Ok((params, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_params() -> ModelParams {
        // D=2, H=2, K=2 with hand-set weights.
        ModelParams {
            w1: array![[1.0, -1.0], [0.5, 2.0]],
            b1: array![0.0, -0.25],
            w2: array![[1.0, 0.0], [-1.0, 1.0]],
            b2: array![0.1, -0.1],
        }
    }

    #[test]
    fn feature_layout_and_values() {
        // C=1, T=3, V=2, M=1. Joint 0: [1, 4, 2] -> pose 7/3, motion (3+2)/2.
        // Joint 1: constant 5 -> pose 5, motion 0.
        let dims = Dims::new(1, 3, 2, 1);
        let values = vec![1.0, 5.0, 4.0, 5.0, 2.0, 5.0]; // (t, v) C-order
        let seq = SkeletonSequence::from_flat(dims, values).unwrap();
        let f = extract_features(&seq);
        assert_eq!(f.len(), feature_dim(dims));
        assert!((f[0] - 7.0 / 3.0).abs() < 1e-12);
        assert!((f[1] - 5.0).abs() < 1e-12);
        assert!((f[2] - 2.5).abs() < 1e-12);
        assert!((f[3] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn single_frame_motion_is_zero() {
        let dims = Dims::new(2, 1, 3, 1);
        let seq = SkeletonSequence::filled(dims, 1.5);
        let f = extract_features(&seq);
        let block = 2 * 3;
        for i in 0..block {
            assert_eq!(f[i], 1.5);
            assert_eq!(f[block + i], 0.0);
        }
    }

    #[test]
    fn forward_matches_hand_computation() {
        let p = tiny_params();
        let x = array![[1.0, 2.0]];
        let cache = forward_batch(&p, &x);
        // h_pre = [1·1 + 2·0.5, 1·(−1) + 2·2 − 0.25] = [2, 2.75]
        assert_eq!(cache.hidden_pre, array![[2.0, 2.75]]);
        assert_eq!(cache.hidden, array![[2.0, 2.75]]);
        // logits = [2·1 + 2.75·(−1) + 0.1, 2.75·1 − 0.1] = [−0.65, 2.65]
        assert!((cache.logits[[0, 0]] - (-0.65)).abs() < 1e-12);
        assert!((cache.logits[[0, 1]] - 2.65).abs() < 1e-12);
        // relu clips the negative pre-activation.
        let x2 = array![[-1.0, 0.0]];
        let cache2 = forward_batch(&p, &x2);
        assert_eq!(cache2.hidden_pre, array![[-1.0, 0.75]]);
        assert_eq!(cache2.hidden, array![[0.0, 0.75]]);
        assert!((cache2.logits[[0, 0]] - (0.75 * -1.0 + 0.1)).abs() < 1e-15);
        assert!((cache2.logits[[0, 1]] - (0.75 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn init_is_seeded_and_roughly_he_scaled() {
        let a = ModelParams::init(5, 100, 32, 4);
        let b = ModelParams::init(5, 100, 32, 4);
        assert_eq!(a, b);
        let c = ModelParams::init(6, 100, 32, 4);
        assert_ne!(a.w1, c.w1);
        assert!(a.b1.iter().all(|&x| x == 0.0));
        assert!(a.b2.iter().all(|&x| x == 0.0));
        let std = (a.w1.mapv(|x| x * x).sum() / (100.0 * 32.0)).sqrt();
        let expect = (2.0f64 / 100.0).sqrt();
        assert!(
            (std - expect).abs() < 0.2 * expect,
            "sample std {std} vs he {expect}"
        );
    }

    #[test]
    fn balanced_adjustments_match_worked_example() {
        let cfg = LossConfig::new(LossMode::BalancedSoftmax, vec![100, 1]);
        let adj = cfg.adjustments(2).unwrap();
        assert!((adj[0] - 100.0f64.ln()).abs() < 1e-15);
        assert_eq!(adj[1], 0.0);
        // Zero logits, true class = the rare one: p = 1/101, loss = ln 101.
        let logits = array![[0.0, 0.0]];
        let targets = array![[0.0, 1.0]];
        let (probs, loss) = batch_loss(&logits, &targets, &adj);
        assert!((probs[[0, 0]] - 100.0 / 101.0).abs() < 1e-12);
        assert!((probs[[0, 1]] - 1.0 / 101.0).abs() < 1e-12);
        assert!((loss - 101.0f64.ln()).abs() < 1e-12);
        assert!((loss - 4.61512051684126).abs() < 1e-11);
    }

    #[test]
    fn balanced_equals_plain_bitwise_for_equal_counts() {
        let balanced = LossConfig::new(LossMode::BalancedSoftmax, vec![17, 17, 17]);
        let plain = LossConfig::new(LossMode::Ce, vec![17, 17, 17]);
        let adj_b = balanced.adjustments(3).unwrap();
        let adj_p = plain.adjustments(3).unwrap();
        // The adjustments themselves are exactly zero...
        assert_eq!(adj_b, vec![0.0; 3]);
        let p = ModelParams::init(9, 6, 4, 3);
        let x = Array2::from_shape_fn((5, 6), |(i, j)| ((i * 7 + j) as f64).sin());
        let cache = forward_batch(&p, &x);
        let targets = Array2::from_shape_fn((5, 3), |(_, k)| if k == 1 { 1.0 } else { 0.0 });
        // ...so losses and gradients agree to the last bit.
        let (probs_b, loss_b) = batch_loss(&cache.logits, &targets, &adj_b);
        let (probs_p, loss_p) = batch_loss(&cache.logits, &targets, &adj_p);
        assert_eq!(loss_b.to_bits(), loss_p.to_bits());
        let gb = backward_batch(&p, &x, &cache, &probs_b, &targets);
        let gp = backward_batch(&p, &x, &cache, &probs_p, &targets);
        assert!(gb
            .w1
            .iter()
            .zip(gp.w1.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(gb
            .b2
            .iter()
            .zip(gp.b2.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn balanced_rejects_zero_count_class() {
        let cfg = LossConfig::new(LossMode::BalancedSoftmax, vec![10, 0, 5]);
        assert!(cfg.adjustments(3).is_err());
        // Plain CE does not care.
        let cfg = LossConfig::new(LossMode::Ce, vec![10, 0, 5]);
        assert!(cfg.adjustments(3).is_ok());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let d = 7;
        let h = 5;
        let k = 4;
        let mut params = ModelParams::init(13, d, h, k);
        let x = Array2::from_shape_fn((6, d), |(i, j)| ((i * 3 + j) as f64 * 0.37).cos());
        let mut targets = Array2::<f64>::zeros((6, k));
        for i in 0..6 {
            // Soft targets: mix two classes.
            targets[[i, i % k]] = 0.7;
            targets[[i, (i + 1) % k]] = 0.3;
        }
        let adj = LossConfig::new(LossMode::BalancedSoftmax, vec![40, 4, 12, 8])
            .adjustments(k)
            .unwrap();
        let cache = forward_batch(&params, &x);
        let (probs, _) = batch_loss(&cache.logits, &targets, &adj);
        let grads = backward_batch(&params, &x, &cache, &probs, &targets);

        let loss_at = |params: &ModelParams| -> f64 {
            let cache = forward_batch(params, &x);
            batch_loss(&cache.logits, &targets, &adj).1
        };
        let eps = 1e-6;
        let check = |get: &dyn Fn(&ModelParams) -> f64,
                         set: &dyn Fn(&mut ModelParams, f64),
                         analytic: f64| {
            let orig = get(&params.clone());
            let mut p = params.clone();
            set(&mut p, orig + eps);
            let plus = loss_at(&p);
            set(&mut p, orig - eps);
            let minus = loss_at(&p);
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((analytic - numeric) / denom).abs() < 1e-5,
                "finite difference mismatch: analytic {analytic}, numeric {numeric}"
            );
        };
        for (i, j) in [(0, 0), (3, 2), (6, 4)] {
            check(
                &|p| p.w1[[i, j]],
                &|p, v| p.w1[[i, j]] = v,
                grads.w1[[i, j]],
            );
        }
        for (i, j) in [(0, 1), (4, 3)] {
            check(
                &|p| p.w2[[i, j]],
                &|p, v| p.w2[[i, j]] = v,
                grads.w2[[i, j]],
            );
        }
        check(&|p| p.b1[2], &|p, v| p.b1[2] = v, grads.b1[2]);
        check(&|p| p.b2[3], &|p, v| p.b2[3] = v, grads.b2[3]);
        let _ = &mut params;
    }

    #[test]
    fn lr_schedule_steps_at_milestones() {
        let cfg = SgdConfig::default();
        assert_eq!(cfg.lr_at(0), 0.1);
        assert_eq!(cfg.lr_at(59), 0.1);
        assert!((cfg.lr_at(60) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(79) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_at(80) - 0.001).abs() < 1e-16);
        assert!((cfg.lr_at(99) - 0.001).abs() < 1e-16);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut params = ModelParams {
            w1: array![[1.0]],
            b1: array![0.0],
            w2: array![[1.0]],
            b2: array![0.0],
        };
        let mut state = OptimizerState::new(&params);
        let grads = Gradients {
            w1: array![[1.0]],
            b1: array![0.5],
            w2: array![[0.0]],
            b2: array![0.0],
        };
        sgd_step(&mut params, &mut state, &grads, 0.1, 0.9);
        // v = 1, θ = 1 − 0.1·1 = 0.9
        assert!((params.w1[[0, 0]] - 0.9).abs() < 1e-15);
        sgd_step(&mut params, &mut state, &grads, 0.1, 0.9);
        // v = 0.9·1 + 1 = 1.9, θ = 0.9 − 0.19 = 0.71
        assert!((params.w1[[0, 0]] - 0.71).abs() < 1e-15);
        assert!((params.b1[0] - (-0.5 * 0.1 - 0.1 * 0.95)).abs() < 1e-15);
    }

    #[test]
    fn predict_breaks_ties_low() {
        let logits = array![[1.0, 3.0, 3.0], [2.0, 1.0, 0.0]];
        assert_eq!(predict(&logits), vec![1, 0]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dims = Dims::new(3, 16, 25, 1);
        let params = ModelParams::init(21, feature_dim(dims), 8, 5);
        let header = CheckpointHeader::new(
            dims,
            8,
            5,
            (0..5).map(|k| format!("class_{k:02}")).collect(),
            LossMode::BalancedSoftmax,
            vec![50, 30, 20, 10, 5],
            21,
            100,
        );
        let path = std::env::temp_dir().join(format!("shapmix_ckpt_{}.bin", std::process::id()));
        save_checkpoint(&path, &params, &header).unwrap();
        let (loaded, loaded_header) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_header, header);
        // Values survive modulo one f64 -> f32 rounding.
        for (a, b) in params.w1.iter().zip(loaded.w1.iter()) {
            assert_eq!(*a as f32, *b as f32);
            assert_eq!(f64::from(*a as f32), *b);
        }

        // Truncation is detected.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::TruncatedPayload { .. }
        ));
        // Extra data too.
        let mut extended = bytes.clone();
        extended.extend_from_slice(&0f32.to_le_bytes());
        std::fs::write(&path, &extended).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::DimMismatch(_)
        ));
        let _ = std::fs::remove_file(&path);
    }
}
