//! Long-tailed subsampling and shot-bucket classification.
//!
//! A balanced dataset is turned into a long-tailed one by keeping
//! `n_k = round(n_max * IF^(-k / (K-1)))` samples for the class at rank `k`,
//! where `IF` is the imbalance factor (head count / tail count) and ranks
//! are assigned by a seeded random permutation of the classes. Evaluation
//! then reports accuracy per "shot" bucket: many / medium / few, by training
//! count.

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, StreamId};

use super::LabeledDataset;

/// Thresholds splitting classes into shot buckets by training-sample count:
/// many-shot strictly above `many_above`, few-shot strictly below
/// `few_below`, medium-shot in between (inclusive on both ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotThresholds {
    pub many_above: usize,
    pub few_below: usize,
}

impl Default for ShotThresholds {
    fn default() -> Self {
        // Many-shot: > 100 samples; few-shot: < 20; medium: 20..=100.
        ShotThresholds {
            many_above: 100,
            few_below: 20,
        }
    }
}

impl ShotThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.few_below > self.many_above {
            return Err(Error::Config(format!(
                "shot thresholds overlap: few_below ({}) > many_above ({})",
                self.few_below, self.many_above
            )));
        }
        Ok(())
    }

    pub fn bucket(&self, count: usize) -> ShotBucket {
        if count > self.many_above {
            ShotBucket::Many
        } else if count < self.few_below {
            ShotBucket::Few
        } else {
            ShotBucket::Medium
        }
    }
}

/// Shot bucket of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotBucket {
    Many,
    Medium,
    Few,
}

impl ShotBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            ShotBucket::Many => "many",
            ShotBucket::Medium => "medium",
            ShotBucket::Few => "few",
        }
    }
}

/// Assign each class to its shot bucket from training counts.
pub fn shot_split(counts: &[usize], thresholds: ShotThresholds) -> Result<Vec<ShotBucket>> {
    thresholds.validate()?;
    Ok(counts.iter().map(|&c| thresholds.bucket(c)).collect())
}

/// Per-rank target counts of the Pareto long-tail profile.
///
/// Rank 0 keeps `max_per_class`; the last rank keeps
/// `round(max_per_class / imbalance_factor)`. Counts are clamped to at
/// least 1 so no class disappears entirely.
pub fn pareto_counts(
    num_classes: usize,
    max_per_class: usize,
    imbalance_factor: f64,
) -> Result<Vec<usize>> {
    if num_classes == 0 {
        return Err(Error::Config("need at least one class".into()));
    }
    if max_per_class == 0 {
        return Err(Error::Config("max_per_class must be positive".into()));
    }
    if !imbalance_factor.is_finite() || imbalance_factor < 1.0 {
        return Err(Error::Config(format!(
            "imbalance factor must be >= 1, got {imbalance_factor}"
        )));
    }
    if num_classes == 1 {
        return Ok(vec![max_per_class]);
    }
    let counts = (0..num_classes)
        .map(|k| {
            let exponent = -(k as f64) / (num_classes as f64 - 1.0);
            let n = (max_per_class as f64) * imbalance_factor.powf(exponent);
            (n.round() as usize).max(1)
        })
        .collect();
    Ok(counts)
}

/// Subsample a (typically balanced) dataset into a long-tailed one.
///
/// Classes are assigned ranks by a seeded random permutation, then each
/// class keeps a uniformly chosen subset (without replacement) of its
/// samples at the rank's target size. Kept samples retain their original
/// relative order. Errors if any class has fewer samples than its target,
/// naming the class.
pub fn pareto_subsample(
    dataset: &LabeledDataset,
    max_per_class: usize,
    imbalance_factor: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let num_classes = dataset.num_classes();
    let targets = pareto_counts(num_classes, max_per_class, imbalance_factor)?;

    // Rank assignment: perm[rank] = class id.
    let mut perm: Vec<usize> = (0..num_classes).collect();
    perm.shuffle(&mut derive_rng(seed, StreamId::ParetoRank, &[]));
    let mut target_of_class = vec![0usize; num_classes];
    for (rank, &class) in perm.iter().enumerate() {
        target_of_class[class] = targets[rank];
    }

    // Indices of each class, in dataset order.
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }

    let mut keep = vec![false; dataset.len()];
    for class in 0..num_classes {
        let available = &by_class[class];
        let target = target_of_class[class];
        if available.len() < target {
            return Err(Error::Data(format!(
                "class {} ({}) has {} samples but the long-tail profile needs {target}",
                class,
                dataset.class_names()[class],
                available.len()
            )));
        }
        let mut rng = derive_rng(seed, StreamId::ParetoClass, &[class as u64]);
        for chosen in index_sample(&mut rng, available.len(), target) {
            keep[available[chosen]] = true;
        }
    }

    let samples = dataset
        .samples()
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, s)| s.clone())
        .collect();
    let out = LabeledDataset::new(
        dataset.dims(),
        num_classes,
        samples,
        Some(dataset.class_names().to_vec()),
    )?;
    match dataset.ground_truth_parts() {
        Some(parts) => out.with_ground_truth(parts.to_vec()),
        None => Ok(out),
    }
}
