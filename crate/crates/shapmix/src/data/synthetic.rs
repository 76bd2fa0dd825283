//! Synthetic skeleton-action generator.
//!
//! Produces desk-scale datasets whose class structure mirrors what the
//! mixing policy exploits on real data: every class is defined by motion and
//! pose offsets on a small set of "active" body parts, while inactive parts
//! carry only a class-independent idle wobble. All class-discriminative
//! signal therefore lives in the active parts, which the generator records
//! as per-class ground truth.
//!
//! Nuisance variation — per-sample phase, amplitude jitter, a global
//! translation, per-part idle motion, and white noise — makes few-sample
//! classes genuinely hard. The idle motion matters most: every inactive
//! part wobbles with its own per-sample amplitude and frequency, a cue that
//! is class-independent in the population but looks discriminative when a
//! class has only a couple of samples, so a naive model memorizes each tail
//! sample's idle fingerprint and misses fresh test contexts. Pasting body
//! parts between samples is precisely the augmentation that randomizes
//! this context away.

use std::f64::consts::TAU;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, StreamId};

use super::{Dims, LabeledDataset, LabeledSample, PartName, PartPartition, PartSet, SkeletonSequence};

/// Bounds of the per-(sample, part, channel) idle wobble amplitude on
/// inactive parts. The spread is wide and the draw is high-dimensional on
/// purpose: the idle fingerprint of any one sample is strong enough to
/// memorize, but the fingerprint space is too large to cover even with
/// hundreds of samples, so every class benefits from augmentation that
/// randomizes it.
const IDLE_AMP_MIN: f64 = 0.02;
const IDLE_AMP_MAX: f64 = 0.45;
/// Bounds of the per-(sample, part) idle wobble frequency (cycles per
/// sequence). Kept below the active-motion band so idle parts still move
/// visibly less than active ones.
const IDLE_FREQ_MIN: f64 = 0.3;
const IDLE_FREQ_MAX: f64 = 1.5;
/// Standard deviation of per-element white noise.
const NOISE_STD: f64 = 0.05;
/// Half-range of the static base pose coordinates. Kept at the same order
/// of magnitude as the per-frame motion deltas so the pose half and the
/// motion half of pooled features are comparably scaled; wildly mismatched
/// feature scales condition gradient descent badly.
const BASE_POSE_RANGE: f64 = 0.25;
/// Half-range of the per-sample global translation, per channel. Large
/// enough that static pose carries little class signal for small classes
/// (the per-class pose shift is far smaller), small enough that the
/// discontinuity where a pasted segment meets its host stays comparable to
/// genuine frame-to-frame motion.
const TRANSLATION_RANGE: f64 = 0.15;
/// Half-range of the per-class pose shift on active joints. Deliberately
/// small — the dependable class evidence is the *motion* of the active
/// parts, not where they sit.
const POSE_SHIFT_RANGE: f64 = 0.025;
/// Half-range of the per-sample amplitude jitter around 1.
const AMP_JITTER: f64 = 0.3;
/// Half-range of the per-sample frequency jitter around 1. Together with
/// the amplitude jitter this keeps two samples of a class from pinning
/// down its motion fingerprint exactly.
const FREQ_JITTER: f64 = 0.15;
/// Phase offset separating performers within one sample.
const PERFORMER_PHASE: f64 = 0.35;

/// Configuration of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    /// Samples per class in the generated split.
    pub per_class: usize,
    pub dims: Dims,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self, partition: &PartPartition) -> Result<()> {
        self.dims.validate()?;
        if self.num_classes == 0 {
            return Err(Error::Config("need at least one class".into()));
        }
        if self.per_class == 0 {
            return Err(Error::Config("need at least one sample per class".into()));
        }
        if self.dims.joints != partition.num_joints() {
            return Err(Error::DimMismatch(format!(
                "dims declare {} joints but the partition covers {}",
                self.dims.joints,
                partition.num_joints()
            )));
        }
        Ok(())
    }
}

/// Motion parameters of one class, drawn once from the class stream.
struct ClassSpec {
    active: PartSet,
    frequency: f64,
    amplitude: f64,
    /// Phase offset per part (indexed by canonical part index).
    part_phase: [f64; super::NUM_PARTS],
    /// Additive pose shift `(C, V)`; applied only on active joints.
    pose_shift: Vec<f64>,
    /// Per-channel motion scale, so channels move with different gains.
    channel_scale: Vec<f64>,
}

fn draw_class_spec(seed: u64, class: usize, dims: Dims, active: PartSet) -> ClassSpec {
    let mut rng = derive_rng(seed, StreamId::SyntheticClass, &[class as u64]);
    let frequency = rng.random_range(1.0..4.0);
    let amplitude = rng.random_range(0.6..1.2);
    let part_phase = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let pose_shift = (0..dims.channels * dims.joints)
        .map(|_| rng.random_range(-POSE_SHIFT_RANGE..POSE_SHIFT_RANGE))
        .collect();
    let channel_scale = (0..dims.channels)
        .map(|_| rng.random_range(0.5..1.0))
        .collect();
    ClassSpec {
        active,
        frequency,
        amplitude,
        part_phase,
        pose_shift,
        channel_scale,
    }
}

/// Generate one split of a synthetic dataset.
///
/// Class definitions depend only on `config.seed` and the class id, so
/// different `split_id`s (e.g. 0 = train, 1 = test) share the same classes
/// while drawing disjoint sample noise.
pub fn generate_synthetic_split(
    config: &SyntheticConfig,
    partition: &PartPartition,
    split_id: u64,
) -> Result<LabeledDataset> {
    config.validate(partition)?;
    let dims = config.dims;
    let (channels, frames, joints, performers) = (
        dims.channels,
        dims.frames,
        dims.joints,
        dims.performers,
    );

    // Shared geometry: base pose per (channel, joint) and a per-joint phase
    // so joints within one part trace distinct trajectories.
    let mut base_rng = derive_rng(config.seed, StreamId::SyntheticBase, &[]);
    let base_pose: Vec<f64> = (0..channels * joints)
        .map(|_| base_rng.random_range(-BASE_POSE_RANGE..BASE_POSE_RANGE))
        .collect();
    let joint_phase: Vec<f64> = (0..joints).map(|_| base_rng.random_range(0.0..TAU)).collect();

    // Active part sets are dealt from a shuffled enumeration of all 2–3
    // part combinations, so no two classes share the exact same set (until
    // the 20 combinations run out and the deal cycles). Classes that
    // differed only in motion parameters would be near-duplicates at the
    // part level, which no part-based method could tell apart; and real
    // actions coordinate multiple body parts, which is also the granularity
    // the coalition machinery works at.
    let mut candidate_sets: Vec<PartSet> = PartSet::FULL
        .subsets()
        .filter(|s| (2..=3).contains(&s.len()))
        .collect();
    candidate_sets.shuffle(&mut base_rng);

    // Which part owns each joint.
    let mut part_of_joint = vec![PartName::Trunk; joints];
    for part in partition.parts() {
        for &j in &part.joints {
            part_of_joint[j] = part.name;
        }
    }

    let specs: Vec<ClassSpec> = (0..config.num_classes)
        .map(|class| {
            let active = candidate_sets[class % candidate_sets.len()];
            draw_class_spec(config.seed, class, dims, active)
        })
        .collect();

    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let mut samples = Vec::with_capacity(config.num_classes * config.per_class);
    for (class, spec) in specs.iter().enumerate() {
        for index in 0..config.per_class {
            let mut rng = derive_rng(
                config.seed,
                StreamId::SyntheticSample,
                &[split_id, class as u64, index as u64],
            );
            let sample_phase = rng.random_range(0.0..TAU);
            let amp_jitter = rng.random_range(1.0 - AMP_JITTER..1.0 + AMP_JITTER);
            let freq_jitter = rng.random_range(1.0 - FREQ_JITTER..1.0 + FREQ_JITTER);
            let translation: Vec<f64> = (0..channels)
                .map(|_| rng.random_range(-TRANSLATION_RANGE..TRANSLATION_RANGE))
                .collect();
            // Idle wobble parameters; only inactive parts use them, but
            // drawing for all parts keeps RNG consumption uniform.
            let idle_amp: Vec<f64> = (0..super::NUM_PARTS * channels)
                .map(|_| rng.random_range(IDLE_AMP_MIN..IDLE_AMP_MAX))
                .collect();
            let idle_freq: Vec<f64> = (0..super::NUM_PARTS)
                .map(|_| rng.random_range(IDLE_FREQ_MIN..IDLE_FREQ_MAX))
                .collect();

            let mut data = Array4::<f32>::zeros((channels, frames, joints, performers));
            for c in 0..channels {
                for t in 0..frames {
                    let phase_t = t as f64 / frames as f64;
                    for v in 0..joints {
                        let part = part_of_joint[v];
                        let active = spec.active.contains(part);
                        let pose = if active {
                            base_pose[c * joints + v] + spec.pose_shift[c * joints + v]
                        } else {
                            base_pose[c * joints + v]
                        };
                        for m in 0..performers {
                            let performer_phase = PERFORMER_PHASE * m as f64;
                            let motion = if active {
                                spec.amplitude
                                    * amp_jitter
                                    * spec.channel_scale[c]
                                    * (TAU * spec.frequency * freq_jitter * phase_t
                                        + spec.part_phase[part.index()]
                                        + joint_phase[v]
                                        + sample_phase
                                        + performer_phase)
                                        .sin()
                            } else {
                                idle_amp[part.index() * channels + c]
                                    * (TAU * idle_freq[part.index()] * phase_t
                                        + joint_phase[v]
                                        + sample_phase
                                        + performer_phase)
                                        .sin()
                            };
                            let value =
                                pose + motion + translation[c] + noise.sample(&mut rng);
                            data[[c, t, v, m]] = value as f32;
                        }
                    }
                }
            }
            samples.push(LabeledSample {
                sequence: SkeletonSequence::from_array_unchecked(data),
                label: class,
            });
        }
    }

    LabeledDataset::new(dims, config.num_classes, samples, None)?
        .with_ground_truth(specs.iter().map(|s| s.active).collect())
}

/// Generate the primary (split 0) synthetic dataset.
pub fn generate_synthetic_dataset(
    config: &SyntheticConfig,
    partition: &PartPartition,
) -> Result<LabeledDataset> {
    generate_synthetic_split(config, partition, 0)
}
