//! Spatial-temporal mixing engine.
//!
//! Two mixing operations over a pair of sequences (`base`, `partner`):
//!
//! * **Global Mixup** — elementwise convex blend `λ·base + (1−λ)·partner`
//!   over the whole tensor.
//! * **Part-level Cut-Mix** — a coalition of body parts is cut from a
//!   temporally down-sampled clip of the partner and pasted into a window of
//!   the base sequence. Down-sampling lets a longer source clip land in a
//!   shorter destination window, so the pasted motion plays back faster
//!   instead of being cropped.
//!
//! Both produce soft labels: the base class receives weight `λ` and the
//! partner class `1−λ`, where for Cut-Mix `λ` is the surviving fraction of
//! the base volume, `1 − |joints|·N_t / (V·T)`.
//!
//! [`st_mix`] rolls the Mixup-vs-Cut-Mix coin and samples every random
//! quantity from a caller-supplied RNG, so one derived stream per batch slot
//! reproduces the full decision.

use ndarray::Array2;
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{Dims, PartName, PartPartition, PartSet, SkeletonSequence, NUM_PARTS};
use crate::error::{Error, Result};

/// Distribution of the Mixup coefficient λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaDist {
    /// λ ~ Uniform[0, 1].
    Uniform,
    /// λ ~ Beta(alpha, beta).
    Beta { alpha: f64, beta: f64 },
}

impl LambdaDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            LambdaDist::Uniform => Ok(rng.random::<f64>()),
            LambdaDist::Beta { alpha, beta } => {
                let dist = Beta::new(alpha, beta).map_err(|e| {
                    Error::Config(format!("invalid beta({alpha}, {beta}) for lambda: {e}"))
                })?;
                Ok(dist.sample(rng))
            }
        }
    }
}

/// Configuration of the mixing engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    /// Probability of choosing global Mixup over part-level Cut-Mix.
    pub mixup_prob: f64,
    /// Inclusive bounds on the number of parts cut per Cut-Mix.
    pub spatial_bounds: (usize, usize),
    /// Bounds on the destination window length as a fraction of `T`.
    pub temporal_bounds: (f64, f64),
    /// Distribution of the Mixup λ.
    pub lambda: LambdaDist,
    /// When `true`, the destination window starts at the source clip's
    /// start frame (clamped into range) instead of an independent draw.
    pub align_temporal: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            mixup_prob: 0.5,
            spatial_bounds: (2, 3),
            temporal_bounds: (0.4, 0.7),
            lambda: LambdaDist::Uniform,
            align_temporal: false,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mixup_prob) {
            return Err(Error::Config(format!(
                "mixup_prob must be in [0, 1], got {}",
                self.mixup_prob
            )));
        }
        let (s_lo, s_hi) = self.spatial_bounds;
        if s_lo < 1 || s_lo > s_hi || s_hi > NUM_PARTS {
            return Err(Error::Config(format!(
                "spatial bounds must satisfy 1 <= lo <= hi <= {NUM_PARTS}, got ({s_lo}, {s_hi})"
            )));
        }
        let (t_lo, t_hi) = self.temporal_bounds;
        if !(t_lo.is_finite() && t_hi.is_finite()) || t_lo <= 0.0 || t_lo > t_hi || t_hi > 1.0 {
            return Err(Error::Config(format!(
                "temporal bounds must satisfy 0 < lo <= hi <= 1, got ({t_lo}, {t_hi})"
            )));
        }
        if let LambdaDist::Beta { alpha, beta } = self.lambda {
            if !(alpha > 0.0 && beta > 0.0) {
                return Err(Error::Config(format!(
                    "beta lambda parameters must be positive, got ({alpha}, {beta})"
                )));
            }
        }
        Ok(())
    }
}

/// The coalition of parts replaced by a Cut-Mix, with its joint indices
/// resolved against the partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialSelection {
    pub parts: PartSet,
    /// Sorted joint indices of `parts`.
    pub joints: Vec<usize>,
}

impl SpatialSelection {
    pub fn from_parts(parts: PartSet, partition: &PartPartition) -> Result<SpatialSelection> {
        if parts.is_empty() {
            return Err(Error::Config(
                "cut-mix needs a non-empty part coalition".into(),
            ));
        }
        Ok(SpatialSelection {
            parts,
            joints: partition.joints_of_set(parts),
        })
    }
}

/// Temporal placement of a Cut-Mix: a source clip of `src_len` frames is
/// down-sampled to `dest_len` frames and pasted at `dest_start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalSegment {
    pub dest_start: usize,
    pub dest_len: usize,
    pub src_start: usize,
    pub src_len: usize,
}

impl TemporalSegment {
    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.dest_len == 0 || self.dest_len > self.src_len {
            return Err(Error::Config(format!(
                "segment needs 1 <= dest_len <= src_len, got dest_len={} src_len={}",
                self.dest_len, self.src_len
            )));
        }
        if self.src_start + self.src_len > frames || self.dest_start + self.dest_len > frames {
            return Err(Error::Config(format!(
                "segment {self:?} out of range for {frames} frames"
            )));
        }
        Ok(())
    }
}

/// Which operation produced a mixed sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixKind {
    Mixup,
    CutMix,
}

/// Which side of the pair the part policy treated as the tail class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyCase {
    /// Base is the majority class: paste the partner's salient parts in.
    PartnerTail,
    /// Base is the minority (or tied) class: keep its salient parts,
    /// replace everything else.
    BaseTail,
}

/// Record of one tail-aware part-policy decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDraw {
    pub case: PolicyCase,
    /// Class whose saliency distribution was sampled.
    pub guided_class: usize,
    /// Coalition drawn from that distribution.
    pub drawn: PartSet,
    /// Coalition actually replaced in the base sequence.
    pub pasted: PartSet,
    /// `true` when the class had no saliency updates yet and the draw fell
    /// back to the uniform distribution over admissible coalitions.
    pub fallback_uniform: bool,
}

/// Where a mixed sample came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixProvenance {
    pub base_index: usize,
    pub partner_index: usize,
    /// Present for Cut-Mix.
    pub selection: Option<SpatialSelection>,
    /// Present for Cut-Mix.
    pub segment: Option<TemporalSegment>,
    /// Present when the part policy (rather than a uniform draw) chose the
    /// coalition.
    pub policy: Option<PolicyDraw>,
}

/// A mixed sample: the blended tensor, its soft label, and provenance.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub sequence: SkeletonSequence,
    /// Soft label over all classes; sums to 1.
    pub label_weights: Vec<f64>,
    pub kind: MixKind,
    pub lambda: f64,
    pub provenance: MixProvenance,
}

fn soft_label(
    num_classes: usize,
    base_label: usize,
    partner_label: usize,
    lambda: f64,
) -> Result<Vec<f64>> {
    if base_label >= num_classes || partner_label >= num_classes {
        return Err(Error::Config(format!(
            "labels ({base_label}, {partner_label}) out of range for {num_classes} classes"
        )));
    }
    let mut weights = vec![0.0; num_classes];
    weights[base_label] += lambda;
    weights[partner_label] += 1.0 - lambda;
    Ok(weights)
}

fn check_same_dims(base: &SkeletonSequence, partner: &SkeletonSequence) -> Result<Dims> {
    let dims = base.dims();
    if partner.dims() != dims {
        return Err(Error::DimMismatch(format!(
            "cannot mix sequences with dims {:?} and {:?}",
            dims,
            partner.dims()
        )));
    }
    Ok(dims)
}

/// Global Mixup: elementwise `λ·base + (1−λ)·partner`.
///
/// The blend is computed in `f64` and cast back to `f32`, which keeps every
/// output inside the closed interval spanned by the two inputs — the cast
/// rounds to nearest and cannot jump past a representable endpoint.
pub fn mixup_blend(
    base: &SkeletonSequence,
    partner: &SkeletonSequence,
    base_label: usize,
    partner_label: usize,
    num_classes: usize,
    lambda: f64,
    indices: (usize, usize),
) -> Result<MixOutcome> {
    check_same_dims(base, partner)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!(
            "mixup lambda must be in [0, 1], got {lambda}"
        )));
    }
    let mut mixed = base.array().clone();
    mixed
        .iter_mut()
        .zip(partner.array().iter())
        .for_each(|(b, &p)| {
            *b = (lambda * f64::from(*b) + (1.0 - lambda) * f64::from(p)) as f32;
        });
    Ok(MixOutcome {
        sequence: SkeletonSequence::from_array_unchecked(mixed),
        label_weights: soft_label(num_classes, base_label, partner_label, lambda)?,
        kind: MixKind::Mixup,
        lambda,
        provenance: MixProvenance {
            base_index: indices.0,
            partner_index: indices.1,
            selection: None,
            segment: None,
            policy: None,
        },
    })
}

/// Draw a uniform coalition whose size is uniform over `spatial_bounds`.
pub fn sample_spatial_parts<R: Rng>(
    rng: &mut R,
    bounds: (usize, usize),
    partition: &PartPartition,
) -> Result<SpatialSelection> {
    let (lo, hi) = bounds;
    if lo < 1 || lo > hi || hi > NUM_PARTS {
        return Err(Error::Config(format!(
            "spatial bounds must satisfy 1 <= lo <= hi <= {NUM_PARTS}, got ({lo}, {hi})"
        )));
    }
    let count = rng.random_range(lo..=hi);
    let parts = PartSet::from_parts(
        index_sample(rng, NUM_PARTS, count)
            .into_iter()
            .map(|i| PartName::from_index(i).unwrap()),
    );
    SpatialSelection::from_parts(parts, partition)
}

/// Draw the temporal placement of a Cut-Mix.
///
/// The destination length is `round(u·T)` for `u ~ Uniform[lo, hi]`,
/// clamped into `[1, T]`; the source clip length is uniform in
/// `[dest_len, T]`; both start frames are uniform over their valid ranges
/// (unless `align` pins the destination to the source start).
pub fn sample_temporal_segment<R: Rng>(
    rng: &mut R,
    frames: usize,
    bounds: (f64, f64),
    align: bool,
) -> Result<TemporalSegment> {
    if frames == 0 {
        return Err(Error::Config("cannot mix zero-frame sequences".into()));
    }
    let (lo, hi) = bounds;
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo > hi || hi > 1.0 {
        return Err(Error::Config(format!(
            "temporal bounds must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})"
        )));
    }
    let u = rng.random_range(lo..=hi);
    let dest_len = ((u * frames as f64).round() as usize).clamp(1, frames);
    let src_len = rng.random_range(dest_len..=frames);
    let src_start = rng.random_range(0..=frames - src_len);
    let dest_start = if align {
        src_start.min(frames - dest_len)
    } else {
        rng.random_range(0..=frames - dest_len)
    };
    let segment = TemporalSegment {
        dest_start,
        dest_len,
        src_start,
        src_len,
    };
    segment.validate(frames)?;
    Ok(segment)
}

/// Source-frame offsets (relative to `src_start`) that down-sample a
/// `src_len`-frame clip to `target_len` frames: offset `k` maps to
/// `round(k·(src_len−1)/(target_len−1))`. A single-frame target takes the
/// middle frame of the clip.
pub fn downsample_indices(src_len: usize, target_len: usize) -> Vec<usize> {
    assert!(
        target_len >= 1 && target_len <= src_len,
        "need 1 <= target_len ({target_len}) <= src_len ({src_len})"
    );
    if target_len == 1 {
        return vec![(((src_len - 1) as f64) / 2.0).round() as usize];
    }
    let scale = (src_len - 1) as f64 / (target_len - 1) as f64;
    (0..target_len)
        .map(|k| (k as f64 * scale).round() as usize)
        .collect()
}

/// Boolean replacement mask of a Cut-Mix: shape `(T, V)`, `true` where the
/// base sequence is overwritten.
pub fn build_mask(
    selection: &SpatialSelection,
    segment: &TemporalSegment,
    dims: Dims,
) -> Result<Array2<bool>> {
    segment.validate(dims.frames)?;
    let mut mask = Array2::from_elem((dims.frames, dims.joints), false);
    for t in segment.dest_start..segment.dest_start + segment.dest_len {
        for &v in &selection.joints {
            if v >= dims.joints {
                return Err(Error::DimMismatch(format!(
                    "selection references joint {v} but sequences have {} joints",
                    dims.joints
                )));
            }
            mask[[t, v]] = true;
        }
    }
    Ok(mask)
}

/// Part-level Cut-Mix with a fixed selection and segment.
///
/// `λ = 1 − |joints|·N_t / (V·T)` is the untouched fraction of the base
/// volume; label weights follow it exactly.
pub fn apply_cutmix(
    base: &SkeletonSequence,
    partner: &SkeletonSequence,
    base_label: usize,
    partner_label: usize,
    num_classes: usize,
    selection: SpatialSelection,
    segment: TemporalSegment,
    indices: (usize, usize),
    policy: Option<PolicyDraw>,
) -> Result<MixOutcome> {
    let dims = check_same_dims(base, partner)?;
    segment.validate(dims.frames)?;
    if let Some(&v) = selection.joints.iter().find(|&&v| v >= dims.joints) {
        return Err(Error::DimMismatch(format!(
            "selection references joint {v} but sequences have {} joints",
            dims.joints
        )));
    }

    let src_offsets = downsample_indices(segment.src_len, segment.dest_len);
    let mut mixed = base.array().clone();
    let partner_arr = partner.array();
    for (k, &offset) in src_offsets.iter().enumerate() {
        let dest_t = segment.dest_start + k;
        let src_t = segment.src_start + offset;
        for &v in &selection.joints {
            for c in 0..dims.channels {
                for m in 0..dims.performers {
                    mixed[[c, dest_t, v, m]] = partner_arr[[c, src_t, v, m]];
                }
            }
        }
    }

    let replaced = (selection.joints.len() * segment.dest_len) as f64
        / (dims.joints * dims.frames) as f64;
    let lambda = 1.0 - replaced;
    Ok(MixOutcome {
        sequence: SkeletonSequence::from_array_unchecked(mixed),
        label_weights: soft_label(num_classes, base_label, partner_label, lambda)?,
        kind: MixKind::CutMix,
        lambda,
        provenance: MixProvenance {
            base_index: indices.0,
            partner_index: indices.1,
            selection: Some(selection),
            segment: Some(segment),
            policy,
        },
    })
}

/// Full spatial-temporal mix with a custom part selector.
///
/// Rolls the Mixup-vs-Cut-Mix coin; on the Cut-Mix branch the selector
/// chooses the coalition (this is how the saliency-guided policy plugs in).
/// All draws come from `rng` in a fixed order: coin, then λ (Mixup) or
/// selector followed by temporal placement (Cut-Mix).
pub fn st_mix_with<R, F>(
    rng: &mut R,
    base: (&SkeletonSequence, usize),
    partner: (&SkeletonSequence, usize),
    num_classes: usize,
    partition: &PartPartition,
    config: &MixConfig,
    indices: (usize, usize),
    select_parts: F,
) -> Result<MixOutcome>
where
    R: Rng,
    F: FnOnce(&mut R) -> Result<(PartSet, Option<PolicyDraw>)>,
{
    config.validate()?;
    let coin: f64 = rng.random();
    if coin < config.mixup_prob {
        let lambda = config.lambda.sample(rng)?;
        mixup_blend(base.0, partner.0, base.1, partner.1, num_classes, lambda, indices)
    } else {
        let (parts, policy) = select_parts(rng)?;
        let selection = SpatialSelection::from_parts(parts, partition)?;
        let segment = sample_temporal_segment(
            rng,
            base.0.dims().frames,
            config.temporal_bounds,
            config.align_temporal,
        )?;
        apply_cutmix(
            base.0,
            partner.0,
            base.1,
            partner.1,
            num_classes,
            selection,
            segment,
            indices,
            policy,
        )
    }
}

/// Plain spatial-temporal mix: uniform part selection (saliency-agnostic).
pub fn st_mix<R: Rng>(
    rng: &mut R,
    base: (&SkeletonSequence, usize),
    partner: (&SkeletonSequence, usize),
    num_classes: usize,
    partition: &PartPartition,
    config: &MixConfig,
    indices: (usize, usize),
) -> Result<MixOutcome> {
    let bounds = config.spatial_bounds;
    st_mix_with(
        rng,
        base,
        partner,
        num_classes,
        partition,
        config,
        indices,
        |rng| Ok((sample_spatial_parts(rng, bounds, partition)?.parts, None)),
    )
}
