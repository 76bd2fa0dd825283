//! Skeleton data model: tensors, datasets, partitions, long-tail
//! subsampling, synthetic generation, and on-disk layout.
//!
//! A skeleton sequence is a dense `f32` tensor with axes
//! `(channels, frames, joints, performers)` — `(C, T, V, M)`. Labels are
//! integer class ids in `0..num_classes`.

mod io;
mod longtail;
mod partition;
mod synthetic;

pub use io::{dataset_content_hash, load_dataset, save_dataset, LoadedDataset, MANIFEST_NAME};
pub use longtail::{pareto_counts, pareto_subsample, shot_split, ShotBucket, ShotThresholds};
pub use partition::{Part, PartName, PartPartition, PartSet, NUM_PARTS};
pub use synthetic::{generate_synthetic_dataset, generate_synthetic_split, SyntheticConfig};

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor dimensions of every sample in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Coordinate channels per joint (e.g. 3 for x/y/z).
    pub channels: usize,
    /// Frames per sequence.
    pub frames: usize,
    /// Joints per skeleton.
    pub joints: usize,
    /// Performers (skeletons) per sample.
    pub performers: usize,
}

impl Dims {
    pub fn new(channels: usize, frames: usize, joints: usize, performers: usize) -> Dims {
        Dims {
            channels,
            frames,
            joints,
            performers,
        }
    }

    /// Total scalar count of one sample tensor.
    pub fn flat_len(&self) -> usize {
        self.channels * self.frames * self.joints * self.performers
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.frames == 0 || self.joints == 0 || self.performers == 0 {
            return Err(Error::Config(format!(
                "all dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    fn shape(&self) -> (usize, usize, usize, usize) {
        (self.channels, self.frames, self.joints, self.performers)
    }
}

/// One skeleton sequence: a finite `f32` tensor of shape `(C, T, V, M)`.
///
/// Construction validates finiteness, so downstream code can assume no
/// NaN/Inf ever enters the pipeline from data.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    data: Array4<f32>,
}

impl SkeletonSequence {
    /// Wrap a tensor, rejecting non-finite values.
    pub fn from_array(data: Array4<f32>) -> Result<SkeletonSequence> {
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "skeleton tensor contains non-finite value {bad}"
            )));
        }
        let data = if data.is_standard_layout() {
            data
        } else {
            // Normalize to C-order so the flat view used for serialization
            // matches the documented (C, T, V, M) element order.
            data.as_standard_layout().to_owned()
        };
        Ok(SkeletonSequence { data })
    }

    /// Build from a flat slice in `(C, T, V, M)` C-order.
    pub fn from_flat(dims: Dims, values: Vec<f32>) -> Result<SkeletonSequence> {
        if values.len() != dims.flat_len() {
            return Err(Error::DimMismatch(format!(
                "flat buffer has {} values but dims {dims:?} require {}",
                values.len(),
                dims.flat_len()
            )));
        }
        let array = Array4::from_shape_vec(dims.shape(), values)
            .map_err(|e| Error::DimMismatch(e.to_string()))?;
        SkeletonSequence::from_array(array)
    }

    /// Constant-valued sequence (handy in tests).
    pub fn filled(dims: Dims, value: f32) -> SkeletonSequence {
        SkeletonSequence {
            data: Array4::from_elem(dims.shape(), value),
        }
    }

    pub fn dims(&self) -> Dims {
        let s = self.data.shape();
        Dims::new(s[0], s[1], s[2], s[3])
    }

    pub fn array(&self) -> &Array4<f32> {
        &self.data
    }

    /// Flat `(C, T, V, M)` C-order view of the tensor.
    pub fn as_flat(&self) -> &[f32] {
        self.data
            .as_slice()
            .expect("sequence tensors are always standard layout")
    }

    /// Internal constructor for freshly computed tensors that are known
    /// finite and standard-layout.
    pub(crate) fn from_array_unchecked(data: Array4<f32>) -> SkeletonSequence {
        debug_assert!(data.is_standard_layout());
        debug_assert!(data.iter().all(|x| x.is_finite()));
        SkeletonSequence { data }
    }
}

/// One labeled sample.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub sequence: SkeletonSequence,
    pub label: usize,
}

/// An in-memory labeled dataset with uniform dimensions.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    dims: Dims,
    num_classes: usize,
    class_names: Vec<String>,
    samples: Vec<LabeledSample>,
    /// Ground-truth "active" parts per class, when known (synthetic data
    /// records which parts carry the class-defining motion).
    ground_truth_parts: Option<Vec<PartSet>>,
}

impl LabeledDataset {
    /// Build a dataset, validating label range, dimension consistency, and
    /// class-name count. Pass `None` for auto-generated class names
    /// (`class_00`, `class_01`, ...).
    pub fn new(
        dims: Dims,
        num_classes: usize,
        samples: Vec<LabeledSample>,
        class_names: Option<Vec<String>>,
    ) -> Result<LabeledDataset> {
        dims.validate()?;
        if num_classes == 0 {
            return Err(Error::Config("dataset must have at least one class".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label >= num_classes {
                return Err(Error::Data(format!(
                    "sample {i} has label {} but the dataset declares {num_classes} classes",
                    s.label
                )));
            }
            if s.sequence.dims() != dims {
                return Err(Error::DimMismatch(format!(
                    "sample {i} has dims {:?}, dataset declares {dims:?}",
                    s.sequence.dims()
                )));
            }
        }
        let class_names = match class_names {
            Some(names) => {
                if names.len() != num_classes {
                    return Err(Error::Data(format!(
                        "{} class names for {num_classes} classes",
                        names.len()
                    )));
                }
                names
            }
            None => default_class_names(num_classes),
        };
        Ok(LabeledDataset {
            dims,
            num_classes,
            class_names,
            samples,
            ground_truth_parts: None,
        })
    }

    /// Attach per-class ground-truth active parts.
    pub fn with_ground_truth(mut self, parts: Vec<PartSet>) -> Result<LabeledDataset> {
        if parts.len() != self.num_classes {
            return Err(Error::Data(format!(
                "{} ground-truth entries for {} classes",
                parts.len(),
                self.num_classes
            )));
        }
        self.ground_truth_parts = Some(parts);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn sequence(&self, i: usize) -> &SkeletonSequence {
        &self.samples[i].sequence
    }

    pub fn label(&self, i: usize) -> usize {
        self.samples[i].label
    }

    pub fn ground_truth_parts(&self) -> Option<&[PartSet]> {
        self.ground_truth_parts.as_deref()
    }

    /// Per-class sample counts, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }
}

fn default_class_names(num_classes: usize) -> Vec<String> {
    // Zero-pad so lexicographic and numeric order agree in sorted exports.
    let width = num_classes.saturating_sub(1).max(1).to_string().len().max(2);
    (0..num_classes)
        .map(|k| format!("class_{k:0width$}"))
        .collect()
}

/// Per-class statistics of a dataset.
#[derive(Debug, Clone)]
pub struct ClassStats {
    /// Sample count per class.
    pub counts: Vec<usize>,
    /// Mean joint position over all samples, frames, and performers,
    /// shape `(C, V)`. Used as the neutral filler when masking parts out.
    pub mean_pose: Array2<f64>,
}

/// Compute class counts and the dataset-wide mean pose.
///
/// The mean is accumulated in `f64` over every `(sample, frame, performer)`
/// triple. An empty dataset errors: there is no meaningful mean pose.
pub fn compute_class_stats(dataset: &LabeledDataset) -> Result<ClassStats> {
    if dataset.is_empty() {
        return Err(Error::Data(
            "cannot compute statistics of an empty dataset".into(),
        ));
    }
    let dims = dataset.dims();
    let mut mean_pose = Array2::<f64>::zeros((dims.channels, dims.joints));
    let mut weight = 0u64;
    for sample in dataset.samples() {
        let arr = sample.sequence.array();
        for c in 0..dims.channels {
            for t in 0..dims.frames {
                for v in 0..dims.joints {
                    for m in 0..dims.performers {
                        mean_pose[[c, v]] += f64::from(arr[[c, t, v, m]]);
                    }
                }
            }
        }
        weight += (dims.frames * dims.performers) as u64;
    }
    mean_pose.mapv_inplace(|x| x / weight as f64);
    Ok(ClassStats {
        counts: dataset.class_counts(),
        mean_pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn tiny_dims() -> Dims {
        Dims::new(2, 3, 4, 1)
    }

    fn seq_with(dims: Dims, f: impl Fn(usize, usize, usize, usize) -> f32) -> SkeletonSequence {
        let arr = Array4::from_shape_fn(dims.shape(), |(c, t, v, m)| f(c, t, v, m));
        SkeletonSequence::from_array(arr).unwrap()
    }

    #[test]
    fn sequence_rejects_non_finite() {
        let mut arr = Array4::<f32>::zeros(tiny_dims().shape());
        arr[[0, 0, 0, 0]] = f32::NAN;
        assert!(SkeletonSequence::from_array(arr).is_err());
        let mut arr = Array4::<f32>::zeros(tiny_dims().shape());
        arr[[1, 2, 3, 0]] = f32::INFINITY;
        assert!(SkeletonSequence::from_array(arr).is_err());
    }

    #[test]
    fn flat_round_trip_is_c_order() {
        let dims = tiny_dims();
        let values: Vec<f32> = (0..dims.flat_len()).map(|i| i as f32).collect();
        let seq = SkeletonSequence::from_flat(dims, values.clone()).unwrap();
        assert_eq!(seq.as_flat(), &values[..]);
        // Element (c=1, t=0, v=2, m=0) sits at offset ((1*3+0)*4+2)*1 = 14.
        assert_eq!(seq.array()[[1, 0, 2, 0]], 14.0);
    }

    #[test]
    fn from_flat_rejects_wrong_length() {
        let dims = tiny_dims();
        assert!(SkeletonSequence::from_flat(dims, vec![0.0; 5]).is_err());
    }

    #[test]
    fn dataset_validates_labels_and_dims() {
        let dims = tiny_dims();
        let good = LabeledSample {
            sequence: SkeletonSequence::filled(dims, 0.0),
            label: 1,
        };
        assert!(LabeledDataset::new(dims, 2, vec![good.clone()], None).is_ok());

        let bad_label = LabeledSample {
            sequence: SkeletonSequence::filled(dims, 0.0),
            label: 2,
        };
        assert!(LabeledDataset::new(dims, 2, vec![bad_label], None).is_err());

        let bad_dims = LabeledSample {
            sequence: SkeletonSequence::filled(Dims::new(2, 3, 4, 2), 0.0),
            label: 0,
        };
        assert!(LabeledDataset::new(dims, 2, vec![bad_dims], None).is_err());

        assert!(LabeledDataset::new(dims, 2, vec![good], Some(vec!["a".into()])).is_err());
    }

    #[test]
    fn default_class_names_sort_correctly() {
        let names = default_class_names(12);
        assert_eq!(names[0], "class_00");
        assert_eq!(names[11], "class_11");
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(sorted, names);
    }

    #[test]
    fn class_counts_tally() {
        let dims = tiny_dims();
        let mk = |label| LabeledSample {
            sequence: SkeletonSequence::filled(dims, 0.0),
            label,
        };
        let ds = LabeledDataset::new(dims, 3, vec![mk(0), mk(2), mk(2)], None).unwrap();
        assert_eq!(ds.class_counts(), vec![1, 0, 2]);
    }

    #[test]
    fn mean_pose_averages_over_samples_frames_performers() {
        let dims = Dims::new(1, 2, 2, 2);
        // Joint 0 always 1.0, joint 1 always 3.0 in sample A; sample B is
        // uniformly 5.0. Mean pose: joint 0 -> 3.0, joint 1 -> 4.0.
        let a = seq_with(dims, |_, _, v, _| if v == 0 { 1.0 } else { 3.0 });
        let b = seq_with(dims, |_, _, _, _| 5.0);
        let ds = LabeledDataset::new(
            dims,
            1,
            vec![
                LabeledSample {
                    sequence: a,
                    label: 0,
                },
                LabeledSample {
                    sequence: b,
                    label: 0,
                },
            ],
            None,
        )
        .unwrap();
        let stats = compute_class_stats(&ds).unwrap();
        assert_eq!(stats.counts, vec![2]);
        assert!((stats.mean_pose[[0, 0]] - 3.0).abs() < 1e-12);
        assert!((stats.mean_pose[[0, 1]] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_pose_is_linear_in_samples() {
        // Mean over the union equals the count-weighted mean of the parts.
        let dims = tiny_dims();
        let a = seq_with(dims, |c, t, v, m| (c + t + v + m) as f32 * 0.25);
        let b = seq_with(dims, |c, t, v, m| (c * t) as f32 - (v * m) as f32 * 0.5);
        let c = seq_with(dims, |_, t, _, _| t as f32);
        let wrap = |seqs: Vec<SkeletonSequence>| {
            LabeledDataset::new(
                dims,
                1,
                seqs.into_iter()
                    .map(|sequence| LabeledSample { sequence, label: 0 })
                    .collect(),
                None,
            )
            .unwrap()
        };
        let all = compute_class_stats(&wrap(vec![a.clone(), b.clone(), c.clone()])).unwrap();
        let ab = compute_class_stats(&wrap(vec![a, b])).unwrap();
        let just_c = compute_class_stats(&wrap(vec![c])).unwrap();
        let blended = &ab.mean_pose * (2.0 / 3.0) + &just_c.mean_pose * (1.0 / 3.0);
        for (x, y) in all.mean_pose.iter().zip(blended.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_reject_empty_dataset() {
        let ds = LabeledDataset::new(tiny_dims(), 2, vec![], None).unwrap();
        assert!(compute_class_stats(&ds).is_err());
    }
}
