//! Shapley-value saliency over body-part coalitions.
//!
//! The five body parts are the players of a cooperative game per class `c`:
//! the payoff `f^c(r)` of a coalition `r` is the model's softmax confidence
//! in `c` when every joint outside `r` is frozen to the dataset mean pose.
//! The saliency of a coalition `b` treats `b` as one merged player among
//! the remaining parts:
//!
//! ```text
//! v_b = 1/(n+1) · Σ_{r ⊆ U∖b} [f(r ∪ b) − f(r)] / C(|r|, n),   n = |U∖b|
//! ```
//!
//! which equals the classic permutation average with `b` merged into a
//! single player (the weights `1/((n+1)·C(|r|, n))` and
//! `|r|!·(n−|r|)!/(n+1)!` are identical).
//!
//! Exact evaluation costs `2^n` payoff calls and is reserved for tests and
//! offline audits. Training uses [`sample_marginal`]: one uniformly drawn
//! coalition size and subset give an unbiased single-sample estimate of
//! `v_b`, folded into a per-`(class, coalition)` EMA table.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dims, PartName, PartPartition, PartSet, SkeletonSequence, NUM_PARTS};
use crate::error::{Error, Result};
use crate::model::{feature_dim, forward_one, ModelParams};
use crate::numeric::binomial;

/// The coalitions tracked by a saliency table, in ascending bit-mask order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibleSet {
    coalitions: Vec<PartSet>,
    /// Coalition bit-mask -> index in `coalitions`.
    index: [Option<u8>; 32],
}

impl AdmissibleSet {
    /// All coalitions whose part count is in `sizes` (each in `1..=5`).
    pub fn from_sizes(sizes: &[usize]) -> Result<AdmissibleSet> {
        if sizes.is_empty() {
            return Err(Error::Config("admissible sizes must be non-empty".into()));
        }
        for &s in sizes {
            if s == 0 || s > NUM_PARTS {
                return Err(Error::Config(format!(
                    "admissible coalition size {s} outside 1..={NUM_PARTS}"
                )));
            }
        }
        let coalitions: Vec<PartSet> = PartSet::FULL
            .subsets()
            .filter(|s| sizes.contains(&s.len()))
            .collect();
        let mut index = [None; 32];
        for (i, c) in coalitions.iter().enumerate() {
            index[c.bits() as usize] = Some(i as u8);
        }
        Ok(AdmissibleSet { coalitions, index })
    }

    /// The default policy space: every 2- and 3-part coalition (20 total).
    pub fn pairs_and_triples() -> AdmissibleSet {
        AdmissibleSet::from_sizes(&[2, 3]).expect("static sizes are valid")
    }

    pub fn coalitions(&self) -> &[PartSet] {
        &self.coalitions
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn index_of(&self, coalition: PartSet) -> Option<usize> {
        self.index[coalition.bits() as usize].map(|i| i as usize)
    }
}

/// Exact coalition Shapley value of `b` under payoff `value`.
///
/// Payoffs are memoized per coalition, and the outer sum visits the subsets
/// of `U∖b` in ascending bit-mask order (evaluating `r ∪ b` before `r`), so
/// the exact floating-point result is independent of whether the caller's
/// `value` does its own caching.
pub fn exact_shapley<F: FnMut(PartSet) -> f64>(mut value: F, b: PartSet) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::Config(
            "shapley value of the empty coalition is undefined".into(),
        ));
    }
    let others = b.complement();
    let n = others.len();
    let mut memo: [Option<f64>; 32] = [None; 32];
    let mut eval = move |set: PartSet| -> f64 {
        let slot = &mut memo[set.bits() as usize];
        match *slot {
            Some(v) => v,
            None => {
                let v = value(set);
                *slot = Some(v);
                v
            }
        }
    };
    let mut total = 0.0;
    for r in others.subsets() {
        let gain = eval(r.union(b)) - eval(r);
        total += gain / binomial(n, r.len());
    }
    Ok(total / (n as f64 + 1.0))
}

/// One Monte-Carlo marginal draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalSample {
    pub coalition: PartSet,
    pub estimate: f64,
}

/// Draw an unbiased single-sample estimate of one coalition's Shapley
/// value.
///
/// Draw order (fixed, so a derived stream reproduces the sample):
/// 1. `b` uniform over the admissible set;
/// 2. a size `s` uniform in `0..=|U∖b|`;
/// 3. `s` parts of `U∖b` uniformly without replacement, forming `r`.
///
/// The estimate is `f(r ∪ b) − f(r)`. Averaging over draws converges to
/// the exact value because each `(s, r)` pair carries probability
/// `1/((n+1)·C(s, n))` — precisely the exact sum's weights.
pub fn sample_marginal<R: Rng, F: FnMut(PartSet) -> f64>(
    rng: &mut R,
    admissible: &AdmissibleSet,
    mut value: F,
) -> MarginalSample {
    let b = admissible.coalitions()[rng.random_range(0..admissible.len())];
    let others: Vec<PartName> = b.complement().iter().collect();
    let n = others.len();
    let size = rng.random_range(0..=n);
    let r = PartSet::from_parts(
        index_sample(rng, n.max(1), size.min(n))
            .into_iter()
            .take(size)
            .map(|i| others[i]),
    );
    let estimate = value(r.union(b)) - value(r);
    MarginalSample {
        coalition: b,
        estimate,
    }
}

/// Online per-`(class, coalition)` saliency estimates.
///
/// Each cell holds an EMA of marginal estimates: `v ← α·v + (1−α)·e`, with
/// `α` the memory (0 keeps only the newest estimate). Cells start at zero
/// with no bias correction — early values are shrunk toward zero, which the
/// normalization downstream tolerates.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyTable {
    values: Array2<f64>,
    update_counts: Array2<u64>,
    momentum: f64,
    admissible: AdmissibleSet,
}

impl SaliencyTable {
    pub fn new(num_classes: usize, admissible: AdmissibleSet, momentum: f64) -> Result<SaliencyTable> {
        if num_classes == 0 {
            return Err(Error::Config("saliency table needs at least one class".into()));
        }
        if !momentum.is_finite() || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "EMA momentum must be in [0, 1), got {momentum}"
            )));
        }
        let cols = admissible.len();
        Ok(SaliencyTable {
            values: Array2::zeros((num_classes, cols)),
            update_counts: Array2::zeros((num_classes, cols)),
            momentum,
            admissible,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.values.nrows()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn admissible(&self) -> &AdmissibleSet {
        &self.admissible
    }

    /// Fold one marginal estimate into the EMA cell.
    pub fn ema_update(&mut self, class: usize, coalition: PartSet, estimate: f64) -> Result<()> {
        if class >= self.num_classes() {
            return Err(Error::Config(format!(
                "class {class} out of range for {} classes",
                self.num_classes()
            )));
        }
        if !estimate.is_finite() {
            return Err(Error::NonFinite(format!(
                "saliency estimate for class {class}, coalition {coalition}"
            )));
        }
        let idx = self.admissible.index_of(coalition).ok_or_else(|| {
            Error::Config(format!("coalition {coalition} is not admissible"))
        })?;
        let cell = &mut self.values[[class, idx]];
        *cell = self.momentum * *cell + (1.0 - self.momentum) * estimate;
        self.update_counts[[class, idx]] += 1;
        Ok(())
    }

    pub fn value(&self, class: usize, coalition: PartSet) -> Option<f64> {
        let idx = self.admissible.index_of(coalition)?;
        Some(self.values[[class, idx]])
    }

    pub fn update_count(&self, class: usize, coalition: PartSet) -> Option<u64> {
        let idx = self.admissible.index_of(coalition)?;
        Some(self.update_counts[[class, idx]])
    }

    /// Raw EMA values of one class, in admissible order.
    pub fn values_row(&self, class: usize) -> &[f64] {
        self.values.row(class).to_slice().expect("row-major table")
    }

    pub fn update_counts_row(&self, class: usize) -> &[u64] {
        self.update_counts
            .row(class)
            .to_slice()
            .expect("row-major table")
    }

    /// `true` once the class has received any update.
    pub fn class_has_updates(&self, class: usize) -> bool {
        self.update_counts.row(class).iter().any(|&c| c > 0)
    }

    /// Export normalization of one class row: negatives clamp to zero, the
    /// rest L1-normalize. A row with no positive mass becomes uniform.
    pub fn normalized_row(&self, class: usize) -> Vec<f64> {
        normalized_saliency(self.values_row(class))
    }

    /// Coalitions of one class ranked by EMA value, highest first; ties
    /// break toward the lower bit mask so the order is deterministic.
    pub fn ranked_coalitions(&self, class: usize) -> Vec<(PartSet, f64)> {
        let mut ranked: Vec<(PartSet, f64)> = self
            .admissible
            .coalitions()
            .iter()
            .copied()
            .zip(self.values_row(class).iter().copied())
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("table values are finite")
                .then(a.0.bits().cmp(&b.0.bits()))
        });
        ranked
    }
}

/// Clamp-at-zero L1 normalization (the export flavor; the policy uses a
/// sign-preserving variant). All-nonpositive input yields the uniform
/// distribution.
pub fn normalized_saliency(values: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / values.len() as f64; values.len()];
    }
    clamped.into_iter().map(|v| v / sum).collect()
}

/// Freeze every joint outside `keep` to the mean pose.
///
/// Masked joints become static: `out[c, t, v, m] = mean_pose[c, v]` (cast
/// once to `f32`) for all frames and performers; kept joints pass through
/// bit-for-bit.
pub fn compose_masked_input(
    sequence: &SkeletonSequence,
    keep: PartSet,
    partition: &PartPartition,
    mean_pose: &Array2<f64>,
) -> Result<SkeletonSequence> {
    let dims = sequence.dims();
    check_probe_shapes(dims, partition, mean_pose)?;
    let mut out = sequence.array().clone();
    for part in partition.parts() {
        if keep.contains(part.name) {
            continue;
        }
        for &v in &part.joints {
            for c in 0..dims.channels {
                let frozen = mean_pose[[c, v]] as f32;
                for t in 0..dims.frames {
                    for m in 0..dims.performers {
                        out[[c, t, v, m]] = frozen;
                    }
                }
            }
        }
    }
    SkeletonSequence::from_array(out)
}

fn check_probe_shapes(
    dims: Dims,
    partition: &PartPartition,
    mean_pose: &Array2<f64>,
) -> Result<()> {
    if partition.num_joints() != dims.joints {
        return Err(Error::DimMismatch(format!(
            "partition covers {} joints, sequences have {}",
            partition.num_joints(),
            dims.joints
        )));
    }
    if mean_pose.dim() != (dims.channels, dims.joints) {
        return Err(Error::DimMismatch(format!(
            "mean pose has shape {:?}, expected ({}, {})",
            mean_pose.dim(),
            dims.channels,
            dims.joints
        )));
    }
    if let Some(bad) = mean_pose.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("mean pose contains {bad}")));
    }
    Ok(())
}

/// Evaluates coalition payoffs `f^c(keep)` for a fixed model.
///
/// Masking commutes with the pooled feature extractor: freezing a joint to
/// a constant makes its pose feature that constant and its motion feature
/// zero. The probe therefore masks in feature space — an `O(D)` edit
/// instead of an `O(C·T·V·M)` tensor rewrite — using the same `f32`-cast
/// mean pose a tensor-space mask would contain, so the two routes agree to
/// floating-point roundoff (see the module tests).
#[derive(Debug, Clone)]
pub struct ClassProbe<'a> {
    model: &'a ModelParams,
    dims: Dims,
    /// Part owning each joint.
    part_of_joint: Vec<PartName>,
    /// Mean pose after the `f32` round-trip, `(C, V)`.
    frozen_pose: Array2<f64>,
}

impl<'a> ClassProbe<'a> {
    pub fn new(
        model: &'a ModelParams,
        partition: &PartPartition,
        mean_pose: &Array2<f64>,
        dims: Dims,
    ) -> Result<ClassProbe<'a>> {
        check_probe_shapes(dims, partition, mean_pose)?;
        if model.input_dim() != feature_dim(dims) {
            return Err(Error::DimMismatch(format!(
                "model expects {} features, sequences of dims {dims:?} yield {}",
                model.input_dim(),
                feature_dim(dims)
            )));
        }
        let mut part_of_joint = vec![PartName::Trunk; dims.joints];
        for part in partition.parts() {
            for &v in &part.joints {
                part_of_joint[v] = part.name;
            }
        }
        Ok(ClassProbe {
            model,
            dims,
            part_of_joint,
            frozen_pose: mean_pose.mapv(|x| f64::from(x as f32)),
        })
    }

    /// Apply the coalition mask to a precomputed feature vector.
    pub fn masked_features(&self, features: ArrayView1<f64>, keep: PartSet) -> Array1<f64> {
        let d = self.dims;
        let block = d.channels * d.joints * d.performers;
        let mut out = features.to_owned();
        for v in 0..d.joints {
            if keep.contains(self.part_of_joint[v]) {
                continue;
            }
            for c in 0..d.channels {
                for m in 0..d.performers {
                    let idx = (c * d.joints + v) * d.performers + m;
                    out[idx] = self.frozen_pose[[c, v]];
                    out[block + idx] = 0.0;
                }
            }
        }
        out
    }

    /// `f^c(keep)` from a precomputed feature vector: the model's plain
    /// softmax confidence in `class` on the masked input.
    pub fn confidence_from_features(
        &self,
        features: ArrayView1<f64>,
        class: usize,
        keep: PartSet,
    ) -> f64 {
        forward_one(self.model, &self.masked_features(features, keep))[class]
    }

    /// `f^c(keep)` from a raw sequence.
    pub fn confidence(&self, sequence: &SkeletonSequence, class: usize, keep: PartSet) -> f64 {
        let features = crate::model::extract_features(sequence);
        self.confidence_from_features(features.view(), class, keep)
    }
}

/// One exported table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyEntry {
    pub ema_value: f64,
    pub normalized: f64,
    pub update_count: u64,
}

/// One entry of a class's saliency ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    /// Canonical coalition label, e.g. `"trunk+left_arm"`.
    pub parts: String,
    pub normalized: f64,
    pub ema_value: f64,
}

/// Ranking depth of the export (the five most salient coalitions).
pub const EXPORT_TOP_K: usize = 5;

/// One class's exported saliency: the top coalitions by normalized value,
/// plus every cell keyed by coalition label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSaliency {
    pub top: Vec<RankedEntry>,
    pub cells: BTreeMap<String, SaliencyEntry>,
}

/// JSON-ready export: class name → per-class saliency. `BTreeMap`s keep
/// the key order stable across runs.
pub type SaliencyExport = BTreeMap<String, ClassSaliency>;

/// Export the full table keyed by class and coalition labels. Rankings
/// sort by normalized saliency, highest first, ties toward the lower bit
/// mask — so the order never depends on map iteration.
pub fn saliency_export(table: &SaliencyTable, class_names: &[String]) -> Result<SaliencyExport> {
    if class_names.len() != table.num_classes() {
        return Err(Error::Config(format!(
            "{} class names for a {}-class table",
            class_names.len(),
            table.num_classes()
        )));
    }
    let mut export = SaliencyExport::new();
    for (class, name) in class_names.iter().enumerate() {
        let normalized = table.normalized_row(class);
        let mut cells = BTreeMap::new();
        let mut order: Vec<usize> = (0..table.admissible().len()).collect();
        order.sort_by(|&a, &b| {
            normalized[b]
                .partial_cmp(&normalized[a])
                .expect("normalized values are finite")
                .then(
                    table.admissible().coalitions()[a]
                        .bits()
                        .cmp(&table.admissible().coalitions()[b].bits()),
                )
        });
        for (i, coalition) in table.admissible().coalitions().iter().enumerate() {
            cells.insert(
                coalition.label(),
                SaliencyEntry {
                    ema_value: table.values_row(class)[i],
                    normalized: normalized[i],
                    update_count: table.update_counts_row(class)[i],
                },
            );
        }
        let top = order
            .iter()
            .take(EXPORT_TOP_K)
            .map(|&i| RankedEntry {
                parts: table.admissible().coalitions()[i].label(),
                normalized: normalized[i],
                ema_value: table.values_row(class)[i],
            })
            .collect();
        export.insert(name.clone(), ClassSaliency { top, cells });
    }
    Ok(export)
}
