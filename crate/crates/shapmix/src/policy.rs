//! Tail-aware, saliency-guided part selection.
//!
//! The saliency table is turned into a sampling distribution over
//! admissible coalitions:
//!
//! ```text
//! d(c) = softmax( norm({ v_b^c / |b| }) / τ )
//! ```
//!
//! where `|b|` is the coalition's **joint** count (larger coalitions must
//! earn their saliency per joint), `norm` is sign-preserving L1
//! normalization `x / Σ|x|`, and `τ` is a temperature. An all-zero row
//! (including the untrained case) yields the uniform distribution directly.
//!
//! Mixing a pair then respects the tail:
//!
//! * base more frequent than partner — the partner is the tail class; draw
//!   `b ~ d(partner)` and paste the partner's parts `b` into the base;
//! * otherwise (ties included) — the base is the tail class; draw
//!   `b ~ d(base)` and paste the complement, so the base keeps its own
//!   salient parts `b`.
//!
//! Either way the minority class's discriminative parts survive in the
//! mixed sample, and the soft label mass follows the surviving volume.

use rand::Rng;

use crate::data::{PartPartition, PartSet};
use crate::error::{Error, Result};
use crate::mix::{st_mix_with, MixConfig, MixOutcome, PolicyCase, PolicyDraw};
use crate::numeric::softmax;
use crate::saliency::SaliencyTable;
use crate::data::SkeletonSequence;

/// Sampling distribution over the admissible coalitions of one class, in
/// the table's admissible order.
pub fn importance_distribution(
    table: &SaliencyTable,
    class: usize,
    temperature: f64,
    partition: &PartPartition,
) -> Result<Vec<f64>> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if class >= table.num_classes() {
        return Err(Error::Config(format!(
            "class {class} out of range for {} classes",
            table.num_classes()
        )));
    }
    let admissible = table.admissible();
    let per_joint: Vec<f64> = table
        .values_row(class)
        .iter()
        .zip(admissible.coalitions())
        .map(|(&v, &b)| v / partition.joint_count_of_set(b) as f64)
        .collect();
    let scale: f64 = per_joint.iter().map(|x| x.abs()).sum();
    if scale == 0.0 {
        return Ok(vec![1.0 / admissible.len() as f64; admissible.len()]);
    }
    let scored: Vec<f64> = per_joint.iter().map(|x| (x / scale) / temperature).collect();
    Ok(softmax(&scored))
}

/// Draw an index from a categorical distribution with one uniform variate.
fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Choose the coalition to paste for one (base, partner) pair.
///
/// Returns the parts to replace in the base sequence together with the full
/// policy record. Exactly one uniform variate is consumed for the
/// categorical draw.
pub fn tail_aware_parts<R: Rng>(
    rng: &mut R,
    base_class: usize,
    partner_class: usize,
    class_counts: &[usize],
    table: &SaliencyTable,
    temperature: f64,
    partition: &PartPartition,
) -> Result<(PartSet, PolicyDraw)> {
    if class_counts.len() != table.num_classes() {
        return Err(Error::Config(format!(
            "{} class counts for a {}-class saliency table",
            class_counts.len(),
            table.num_classes()
        )));
    }
    if base_class >= class_counts.len() || partner_class >= class_counts.len() {
        return Err(Error::Config(format!(
            "classes ({base_class}, {partner_class}) out of range for {} classes",
            class_counts.len()
        )));
    }
    let case = if class_counts[base_class] > class_counts[partner_class] {
        PolicyCase::PartnerTail
    } else {
        PolicyCase::BaseTail
    };
    let guided_class = match case {
        PolicyCase::PartnerTail => partner_class,
        PolicyCase::BaseTail => base_class,
    };
    let probs = importance_distribution(table, guided_class, temperature, partition)?;
    let drawn = table.admissible().coalitions()[sample_categorical(rng, &probs)];
    let pasted = match case {
        PolicyCase::PartnerTail => drawn,
        PolicyCase::BaseTail => drawn.complement(),
    };
    if pasted.is_empty() {
        return Err(Error::Config(format!(
            "coalition {drawn} covers every part; keeping it would paste nothing \
             (admissible sizes must leave a non-empty complement)"
        )));
    }
    Ok((
        pasted,
        PolicyDraw {
            case,
            guided_class,
            drawn,
            pasted,
            fallback_uniform: !table.class_has_updates(guided_class),
        },
    ))
}

/// Saliency-guided spatial-temporal mix: like [`crate::mix::st_mix`], but
/// the Cut-Mix coalition comes from the tail-aware policy instead of a
/// uniform draw.
#[allow(clippy::too_many_arguments)]
pub fn shap_mix<R: Rng>(
    rng: &mut R,
    base: (&SkeletonSequence, usize),
    partner: (&SkeletonSequence, usize),
    num_classes: usize,
    partition: &PartPartition,
    config: &MixConfig,
    table: &SaliencyTable,
    class_counts: &[usize],
    temperature: f64,
    indices: (usize, usize),
) -> Result<MixOutcome> {
    let (base_class, partner_class) = (base.1, partner.1);
    st_mix_with(
        rng,
        base,
        partner,
        num_classes,
        partition,
        config,
        indices,
        |rng| {
            let (pasted, draw) = tail_aware_parts(
                rng,
                base_class,
                partner_class,
                class_counts,
                table,
                temperature,
                partition,
            )?;
            Ok((pasted, Some(draw)))
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{PartName, PartPartition};
    use crate::rng::{derive_rng, StreamId};
    use crate::saliency::AdmissibleSet;
    use ndarray::Array4;
    use rand::Rng;

    fn table_for_class(class: usize, values: &[(PartSet, f64)], classes: usize) -> SaliencyTable {
        // α = 0 makes each cell exactly the last estimate, so the table can
        // be set to arbitrary values through the public API.
        let mut t = SaliencyTable::new(classes, AdmissibleSet::pairs_and_triples(), 0.0).unwrap();
        for &(b, v) in values {
            t.ema_update(class, b, v).unwrap();
        }
        t
    }

    fn table_with(values: &[(PartSet, f64)], classes: usize) -> SaliencyTable {
        table_for_class(0, values, classes)
    }

    #[test]
    fn distribution_matches_hand_computation() {
        let partition = PartPartition::builtin_25();
        let trunk_larm = PartSet::from_parts([PartName::Trunk, PartName::LeftArm]); // 13 joints
        let trunk_arms =
            PartSet::from_parts([PartName::Trunk, PartName::LeftArm, PartName::RightArm]); // 19
        let table = table_with(&[(trunk_larm, 0.26), (trunk_arms, -0.19)], 1);
        let d = importance_distribution(&table, 0, 0.2, &partition).unwrap();

        // Per-joint scores: 0.26/13 = 0.02 and −0.19/19 = −0.01, rest 0.
        // Sign-preserving L1: scale = 0.03 -> 2/3 and −1/3. Softmax at τ=0.2.
        let admissible = AdmissibleSet::pairs_and_triples();
        let i_pair = admissible.index_of(trunk_larm).unwrap();
        let i_triple = admissible.index_of(trunk_arms).unwrap();
        let mut scores = vec![0.0f64; 20];
        scores[i_pair] = (0.26 / 13.0) / 0.03 / 0.2;
        scores[i_triple] = (-0.19 / 19.0) / 0.03 / 0.2;
        let expect = softmax(&scores);
        for (a, b) in d.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d[i_pair] > d[i_triple]);
        // The negative-saliency coalition is *less* likely than a neutral one.
        let neutral = (0..20).find(|&i| i != i_pair && i != i_triple).unwrap();
        assert!(d[i_triple] < d[neutral]);
    }

    #[test]
    fn zero_row_is_exactly_uniform() {
        let partition = PartPartition::builtin_25();
        let table = SaliencyTable::new(3, AdmissibleSet::pairs_and_triples(), 0.9).unwrap();
        let d = importance_distribution(&table, 1, 0.2, &partition).unwrap();
        assert_eq!(d, vec![0.05; 20]);
    }

    #[test]
    fn temperature_must_be_positive() {
        let partition = PartPartition::builtin_25();
        let table = SaliencyTable::new(1, AdmissibleSet::pairs_and_triples(), 0.9).unwrap();
        assert!(importance_distribution(&table, 0, 0.0, &partition).is_err());
        assert!(importance_distribution(&table, 0, -1.0, &partition).is_err());
        assert!(importance_distribution(&table, 0, f64::NAN, &partition).is_err());
        assert!(importance_distribution(&table, 5, 0.2, &partition).is_err());
    }

    #[test]
    fn distribution_is_scale_invariant() {
        let partition = PartPartition::builtin_25();
        let admissible = AdmissibleSet::pairs_and_triples();
        let mut rng = derive_rng(33, StreamId::SaliencyEstimate, &[1]);
        let base_values: Vec<(PartSet, f64)> = admissible
            .coalitions()
            .iter()
            .map(|&b| (b, rng.random_range(-0.3..0.3)))
            .collect();
        let d0 = importance_distribution(&table_with(&base_values, 1), 0, 0.2, &partition).unwrap();

        // Power-of-two scaling is exact in floating point, so the
        // distribution is reproduced bit-for-bit.
        for k in [2.0, 0.5, 1024.0] {
            let scaled: Vec<(PartSet, f64)> =
                base_values.iter().map(|&(b, v)| (b, v * k)).collect();
            let dk =
                importance_distribution(&table_with(&scaled, 1), 0, 0.2, &partition).unwrap();
            assert!(d0
                .iter()
                .zip(&dk)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        // Arbitrary positive factors agree to tight relative tolerance.
        for k in [3.7, 0.123, 97.0] {
            let scaled: Vec<(PartSet, f64)> =
                base_values.iter().map(|&(b, v)| (b, v * k)).collect();
            let dk =
                importance_distribution(&table_with(&scaled, 1), 0, 0.2, &partition).unwrap();
            for (a, b) in d0.iter().zip(&dk) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn case_selection_and_complement() {
        let partition = PartPartition::builtin_25();
        let table = SaliencyTable::new(3, AdmissibleSet::pairs_and_triples(), 0.9).unwrap();
        let counts = vec![100, 10, 10];
        let mut rng = derive_rng(1, StreamId::SampleMix, &[0, 0]);

        // Base majority: partner guides, drawn == pasted.
        let (pasted, draw) =
            tail_aware_parts(&mut rng, 0, 1, &counts, &table, 0.2, &partition).unwrap();
        assert_eq!(draw.case, PolicyCase::PartnerTail);
        assert_eq!(draw.guided_class, 1);
        assert_eq!(draw.drawn, pasted);
        assert!(draw.fallback_uniform);

        // Base minority: base guides, pasted is the exact complement.
        let (pasted, draw) =
            tail_aware_parts(&mut rng, 1, 0, &counts, &table, 0.2, &partition).unwrap();
        assert_eq!(draw.case, PolicyCase::BaseTail);
        assert_eq!(draw.guided_class, 1);
        assert_eq!(draw.pasted, pasted);
        assert_eq!(draw.drawn.complement(), pasted);
        assert_eq!(draw.drawn.union(pasted), PartSet::FULL);

        // Tie counts as base-minority.
        let (_, draw) =
            tail_aware_parts(&mut rng, 1, 2, &counts, &table, 0.2, &partition).unwrap();
        assert_eq!(draw.case, PolicyCase::BaseTail);
        assert_eq!(draw.guided_class, 1);
    }

    #[test]
    fn draw_frequencies_follow_the_distribution() {
        let partition = PartPartition::builtin_25();
        let hot = PartSet::from_parts([PartName::LeftLeg, PartName::RightLeg]);
        let table = table_for_class(1, &[(hot, 0.5)], 2);
        let counts = vec![100, 10];
        let d = importance_distribution(&table, 1, 0.2, &partition).unwrap();
        let admissible = AdmissibleSet::pairs_and_triples();
        let hot_idx = admissible.index_of(hot).unwrap();
        assert!(d[hot_idx] > 0.5, "single positive cell should dominate");

        let mut rng = derive_rng(8, StreamId::SampleMix, &[2, 0]);
        let draws = 20_000;
        let mut freq = vec![0usize; 20];
        for _ in 0..draws {
            // Base 0 is the majority, so class 1 guides and pasted == drawn.
            let (_, draw) =
                tail_aware_parts(&mut rng, 0, 1, &counts, &table, 0.2, &partition).unwrap();
            freq[admissible.index_of(draw.drawn).unwrap()] += 1;
        }
        for i in 0..20 {
            let expect = d[i] * draws as f64;
            let sigma = (draws as f64 * d[i] * (1.0 - d[i])).sqrt();
            assert!(
                (freq[i] as f64 - expect).abs() <= 4.0 * sigma + 1.0,
                "coalition {i}: {} draws vs expected {expect:.1}",
                freq[i]
            );
        }
    }

    #[test]
    fn full_coverage_coalitions_cannot_be_kept() {
        let partition = PartPartition::builtin_25();
        let table = SaliencyTable::new(2, AdmissibleSet::from_sizes(&[5]).unwrap(), 0.9).unwrap();
        let counts = vec![10, 10];
        let mut rng = derive_rng(3, StreamId::SampleMix, &[0, 0]);
        // Tie -> base tail -> paste complement of the full set -> empty.
        assert!(tail_aware_parts(&mut rng, 0, 1, &counts, &table, 0.2, &partition).is_err());
    }

    #[test]
    fn shap_mix_records_policy_provenance() {
        let partition = PartPartition::builtin_25();
        let _dims = crate::data::Dims::new(3, 16, 25, 1);
        let mut rng = derive_rng(14, StreamId::SyntheticBase, &[5]);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            SkeletonSequence::from_array(Array4::from_shape_fn(
                (3, 16, 25, 1),
                |_| rng.random_range(-1.0..1.0f32),
            ))
            .unwrap()
        };
        let base = mk(&mut rng);
        let partner = mk(&mut rng);
        let table = table_with(
            &[(PartSet::from_parts([PartName::Trunk, PartName::LeftArm]), 0.4)],
            2,
        );
        let counts = vec![5, 50];
        let config = MixConfig {
            mixup_prob: 0.0,
            ..MixConfig::default()
        };
        let mut mix_rng = derive_rng(14, StreamId::SampleMix, &[0, 0]);
        let out = shap_mix(
            &mut mix_rng,
            (&base, 0),
            (&partner, 1),
            2,
            &partition,
            &config,
            &table,
            &counts,
            0.2,
            (3, 8),
        )
        .unwrap();
        assert_eq!(out.kind, crate::mix::MixKind::CutMix);
        let draw = out.provenance.policy.expect("policy recorded");
        // counts[0] < counts[1]: base is the tail, keeps its drawn parts.
        assert_eq!(draw.case, PolicyCase::BaseTail);
        assert_eq!(draw.guided_class, 0);
        assert_eq!(draw.pasted, draw.drawn.complement());
        assert_eq!(
            out.provenance.selection.unwrap().parts,
            draw.pasted
        );
        assert!((out.label_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(out.provenance.base_index, 3);
        assert_eq!(out.provenance.partner_index, 8);
    }
}
