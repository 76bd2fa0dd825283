//! Randomized property checks over the library's core invariants.
//!
//! Each property states an exact or tightly-bounded relation that must
//! hold for *every* input, then lets proptest hunt for counterexamples.
//! The per-case oracles recompute expected values independently of the
//! code under test.

use ndarray::Array4;
use proptest::prelude::*;

use shapmix::data::{pareto_counts, Dims, PartPartition, PartSet, SkeletonSequence};
use shapmix::mix::{st_mix, MixConfig, MixKind};
use shapmix::numeric::{binomial, softmax};
use shapmix::rng::{derive_rng, StreamId};

/// A finite random sequence of the given dims, values in ±2.
fn random_sequence(dims: Dims, seed: u64) -> SkeletonSequence {
    use rand::Rng;
    let mut rng = derive_rng(seed, StreamId::SyntheticSample, &[7, 7, seed]);
    let data: Vec<f32> = (0..dims.flat_len())
        .map(|_| rng.random_range(-2.0f32..2.0))
        .collect();
    SkeletonSequence::from_flat(dims, data).unwrap()
}

proptest! {
    /// Mix outputs carry a proper label distribution: weights in [0, 1]
    /// summing to 1, with at most the two source classes weighted.
    #[test]
    fn mix_labels_are_convex(seed in 0u64..500, frames in 2usize..20) {
        let partition = PartPartition::builtin_25();
        let dims = Dims::new(2, frames, 25, 1);
        let a = random_sequence(dims, seed);
        let b = random_sequence(dims, seed + 1000);
        let mut rng = derive_rng(seed, StreamId::SampleMix, &[0, 0]);
        let out = st_mix(
            &mut rng,
            (&a, 0),
            (&b, 2),
            4,
            &partition,
            &MixConfig::default(),
            (0, 1),
        )
        .unwrap();
        let sum: f64 = out.label_weights.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "weights sum to {sum}");
        for (k, &w) in out.label_weights.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&w));
            if k != 0 && k != 2 {
                prop_assert_eq!(w, 0.0, "class {} got weight {}", k, w);
            }
        }
        prop_assert!((0.0..=1.0).contains(&out.lambda));
    }

    /// CutMix λ equals the kept-cell fraction computed from the recorded
    /// provenance, exactly; mixup λ reproduces each blended cell exactly.
    #[test]
    fn mix_lambda_matches_provenance(seed in 0u64..500) {
        let partition = PartPartition::builtin_25();
        let dims = Dims::new(3, 16, 25, 1);
        let a = random_sequence(dims, seed);
        let b = random_sequence(dims, seed + 1000);
        let mut rng = derive_rng(seed, StreamId::SampleMix, &[1, 0]);
        let out = st_mix(
            &mut rng,
            (&a, 1),
            (&b, 3),
            5,
            &partition,
            &MixConfig::default(),
            (0, 1),
        )
        .unwrap();
        match out.kind {
            MixKind::CutMix => {
                let sel = out.provenance.selection.as_ref().unwrap();
                let seg = out.provenance.segment.as_ref().unwrap();
                let replaced =
                    (sel.joints.len() * seg.dest_len) as f64 / (25.0 * 16.0);
                prop_assert_eq!(out.lambda, 1.0 - replaced);
            }
            MixKind::Mixup => {
                let l = out.lambda;
                let (arr_a, arr_b, arr_o) = (a.array(), b.array(), out.sequence.array());
                for (idx, &v) in arr_o.indexed_iter() {
                    let expect =
                        (l * f64::from(arr_a[idx]) + (1.0 - l) * f64::from(arr_b[idx])) as f32;
                    prop_assert_eq!(v, expect);
                }
            }
        }
    }

    /// Mixing never mutates its inputs, and CutMix leaves every cell
    /// outside the pasted region bitwise equal to the base.
    #[test]
    fn mix_preserves_inputs_and_unmasked_cells(seed in 0u64..300) {
        let partition = PartPartition::builtin_25();
        let dims = Dims::new(2, 12, 25, 2);
        let a = random_sequence(dims, seed);
        let b = random_sequence(dims, seed + 1000);
        let (a_copy, b_copy) = (a.clone(), b.clone());
        let mut rng = derive_rng(seed, StreamId::SampleMix, &[2, 0]);
        let config = MixConfig { mixup_prob: 0.0, ..MixConfig::default() };
        let out = st_mix(&mut rng, (&a, 0), (&b, 1), 2, &partition, &config, (0, 1)).unwrap();
        prop_assert_eq!(&a, &a_copy);
        prop_assert_eq!(&b, &b_copy);

        let sel = out.provenance.selection.as_ref().unwrap();
        let seg = out.provenance.segment.as_ref().unwrap();
        let in_mask = |t: usize, v: usize| {
            sel.joints.contains(&v)
                && t >= seg.dest_start
                && t < seg.dest_start + seg.dest_len
        };
        let (arr_a, arr_o) = (a.array(), out.sequence.array());
        for ((c, t, v, m), &val) in arr_o.indexed_iter() {
            if !in_mask(t, v) {
                prop_assert_eq!(val, arr_a[(c, t, v, m)]);
            }
        }
    }

    /// Long-tail profiles are monotone: head count equals the cap, counts
    /// never increase along ranks, and every class keeps at least one
    /// sample.
    #[test]
    fn pareto_profiles_are_monotone(
        num_classes in 1usize..30,
        max_per_class in 1usize..500,
        imbalance in 1.0f64..1000.0,
    ) {
        let counts = pareto_counts(num_classes, max_per_class, imbalance).unwrap();
        prop_assert_eq!(counts.len(), num_classes);
        prop_assert_eq!(counts[0], max_per_class);
        for w in counts.windows(2) {
            prop_assert!(w[0] >= w[1], "counts must not increase: {:?}", w);
        }
        prop_assert!(counts.iter().all(|&n| n >= 1));
    }

    /// Softmax is a probability vector and is stable under shifts.
    #[test]
    fn softmax_is_shift_stable(
        logits in proptest::collection::vec(-50.0f64..50.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let p = softmax(&logits);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = logits.iter().map(|&z| z + shift).collect();
        for (x, y) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

/// Pascal's identity pins the exact binomial table (values below 2^53
/// stay integer-exact in `f64`).
#[test]
fn binomial_satisfies_pascal_identity() {
    for n in 1usize..=20 {
        for k in 1..=n {
            assert_eq!(binomial(n, k), binomial(n - 1, k - 1) + binomial(n - 1, k));
        }
        assert_eq!(binomial(n, 0), 1.0);
        assert_eq!(binomial(n, n), 1.0);
    }
}

/// Exhaustive part-set algebra over all 32 subsets.
#[test]
fn part_set_algebra_holds_exhaustively() {
    for bits in 0u8..32 {
        let s = PartSet::from_bits(bits).unwrap();
        let c = s.complement();
        assert_eq!(s.union(c), PartSet::FULL);
        assert!(s.intersection(c).is_empty());
        assert_eq!(s.len() + c.len(), 5);
        let subs: Vec<PartSet> = s.subsets().collect();
        assert_eq!(subs.len(), 1usize << s.len());
        assert!(subs.iter().all(|sub| sub.is_subset_of(s)));
        if !s.is_empty() {
            // Canonical labels round-trip.
            assert_eq!(PartSet::parse_label(&s.label()).unwrap(), s);
        }
    }
}

/// Saving and re-loading a dataset preserves every byte, and the content
/// hash identifies it across directories.
#[test]
fn dataset_io_round_trips_bitwise() {
    use shapmix::data::{
        dataset_content_hash, load_dataset, save_dataset, LabeledDataset, LabeledSample,
    };

    let dims = Dims::new(2, 6, 25, 1);
    let samples: Vec<LabeledSample> = (0..6)
        .map(|i| LabeledSample {
            sequence: random_sequence(dims, 4000 + i),
            label: (i % 3) as usize,
        })
        .collect();
    let dataset = LabeledDataset::new(dims, 3, samples, None).unwrap();

    let root = std::env::temp_dir().join(format!("shapmix_prop_io_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    let (dir_a, dir_b) = (root.join("a"), root.join("b"));
    save_dataset(&dataset, &dir_a).unwrap();
    save_dataset(&dataset, &dir_b).unwrap();

    let loaded = load_dataset(&dir_a).unwrap();
    assert!(loaded.warnings.is_empty());
    assert_eq!(loaded.dataset.len(), dataset.len());
    for i in 0..dataset.len() {
        assert_eq!(loaded.dataset.label(i), dataset.label(i));
        assert_eq!(
            loaded.dataset.sequence(i).as_flat(),
            dataset.sequence(i).as_flat()
        );
    }
    assert_eq!(
        dataset_content_hash(&dir_a).unwrap(),
        dataset_content_hash(&dir_b).unwrap()
    );
    let _ = std::fs::remove_dir_all(&root);
}

/// An all-performers blend is still expressible: mixing with itself under
/// any λ returns the base bitwise (λ·x + (1−λ)·x rounds to x only when
/// the two sources agree — the degenerate self-pair case the trainer can
/// produce).
#[test]
fn self_mix_is_identity_for_mixup() {
    let partition = PartPartition::builtin_25();
    let dims = Dims::new(2, 8, 25, 1);
    let a = random_sequence(dims, 31);
    let config = MixConfig {
        mixup_prob: 1.0,
        ..MixConfig::default()
    };
    let mut rng = derive_rng(31, StreamId::SampleMix, &[3, 0]);
    let out = st_mix(&mut rng, (&a, 2), (&a, 2), 4, &partition, &config, (5, 5)).unwrap();
    assert_eq!(out.sequence.as_flat(), a.as_flat());
    assert_eq!(out.label_weights[2], 1.0);
    let arr = Array4::from_shape_vec((2, 8, 25, 1), a.as_flat().to_vec()).unwrap();
    assert_eq!(out.sequence.array(), &arr);
}
