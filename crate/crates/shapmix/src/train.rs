//! Training loop and evaluation harness.
//!
//! One iteration of the mixed-training loop does, in order:
//!
//! 1. **Saliency estimation** (shap-mix mode, every `estimate_every`-th
//!    iteration): one Monte-Carlo marginal draw per clean batch sample,
//!    folded into the EMA table under the sample's own class. Estimation
//!    runs from the first iteration — including during warm-up — so the
//!    table is ready when mixing starts.
//! 2. **Mixing**: the batch is paired against a seeded permutation of
//!    itself and each pair is mixed (uniform parts for st-mix, the
//!    tail-aware policy for shap-mix).
//! 3. **Losses**: the clean batch always contributes; the mixed batch
//!    contributes `mixed_loss_weight · loss` once the 0-based epoch index
//!    reaches `warmup_epochs`.
//! 4. A single SGD step on the summed gradients.
//!
//! Every random decision draws from its own derived stream keyed by
//! `(master seed, purpose, epoch/iteration/slot)`, so runs are exactly
//! reproducible and the phases cannot perturb each other's randomness.
//!
//! Evaluation reports overall accuracy (sample-level) plus the mean of
//! per-class accuracies inside each shot bucket (many/medium/few by
//! training count).

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    compute_class_stats, ClassStats, LabeledDataset, PartPartition, ShotBucket, ShotThresholds,
};
use crate::error::{Error, Result};
use crate::mix::{st_mix, MixConfig};
use crate::model::{
    backward_batch, batch_loss, feature_dim, features_matrix, forward_batch, predict, sgd_step,
    LossConfig, LossMode, ModelParams, OptimizerState, SgdConfig,
};
use crate::policy::shap_mix;
use crate::rng::{derive_rng, StreamId};
use crate::saliency::{sample_marginal, AdmissibleSet, ClassProbe, SaliencyTable};

/// Which augmentation the trainer applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// Clean samples only.
    Baseline,
    /// Spatial-temporal mixing with uniform part selection.
    StMix,
    /// Saliency-guided, tail-aware mixing.
    ShapMix,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::StMix => "st-mix",
            TrainMode::ShapMix => "shap-mix",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrainMode> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "st-mix" => Ok(TrainMode::StMix),
            "shap-mix" => Ok(TrainMode::ShapMix),
            other => Err(Error::Config(format!(
                "unknown training mode {other:?} (expected baseline, st-mix, or shap-mix)"
            ))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full training configuration. All fields have defaults, so a partial
/// JSON object deserializes into a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub loss: LossMode,
    pub epochs: usize,
    /// Epochs (0-based count) before the mixed loss starts contributing.
    pub warmup_epochs: usize,
    pub batch_size: usize,
    /// Hidden width of the MLP.
    pub hidden: usize,
    pub mix: MixConfig,
    /// Softmax temperature τ of the part-importance distribution.
    pub temperature: f64,
    /// EMA memory α of the saliency table.
    pub ema_momentum: f64,
    /// Run the estimation phase on every n-th iteration.
    pub estimate_every: usize,
    /// Coalition sizes tracked by the saliency table.
    pub admissible_sizes: Vec<usize>,
    /// Weight of the mixed-batch loss relative to the clean loss.
    pub mixed_loss_weight: f64,
    pub optimizer: SgdConfig,
    pub shot_thresholds: ShotThresholds,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::ShapMix,
            loss: LossMode::BalancedSoftmax,
            epochs: 100,
            warmup_epochs: 5,
            batch_size: 64,
            hidden: 64,
            mix: MixConfig::default(),
            temperature: 0.2,
            ema_momentum: 0.9,
            estimate_every: 1,
            admissible_sizes: vec![2, 3],
            mixed_loss_weight: 1.0,
            optimizer: SgdConfig::default(),
            shot_thresholds: ShotThresholds::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if self.estimate_every == 0 {
            return Err(Error::Config(
                "estimate_every must be at least 1 (estimate every n-th iteration)".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return Err(Error::Config(format!(
                "EMA momentum must be in [0, 1), got {}",
                self.ema_momentum
            )));
        }
        if !(self.mixed_loss_weight.is_finite() && self.mixed_loss_weight >= 0.0) {
            return Err(Error::Config(format!(
                "mixed loss weight must be non-negative, got {}",
                self.mixed_loss_weight
            )));
        }
        self.mix.validate()?;
        self.optimizer.validate()?;
        self.shot_thresholds.validate()?;
        AdmissibleSet::from_sizes(&self.admissible_sizes)?;
        Ok(())
    }
}

/// Accuracy summary of one evaluation pass. Bucket entries are `None` when
/// no class falls in the bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Fraction of correctly classified samples.
    pub overall: f64,
    /// Mean per-class accuracy over many-shot classes.
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
}

/// Per-class evaluation record (also the per-class CSV row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRecord {
    pub class_id: usize,
    pub class_name: String,
    pub train_count: usize,
    pub bucket: ShotBucket,
    /// Samples of this class in the evaluation set.
    pub eval_count: usize,
    /// `None` when the class has no evaluation samples.
    pub accuracy: Option<f64>,
}

/// Full evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub overall: f64,
    pub many: Option<f64>,
    pub medium: Option<f64>,
    pub few: Option<f64>,
    pub per_class: Vec<PerClassRecord>,
}

impl EvalMetrics {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            overall: self.overall,
            many: self.many,
            medium: self.medium,
            few: self.few,
        }
    }
}

/// Compute metrics from predictions against ground-truth labels.
///
/// `train_counts` drives the shot buckets; bucket accuracy is the
/// unweighted mean of the accuracies of the classes in the bucket (classes
/// with no evaluation samples are skipped).
pub fn metrics_from_predictions(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
    class_names: &[String],
    train_counts: &[usize],
    thresholds: ShotThresholds,
) -> Result<EvalMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    if class_names.len() != num_classes || train_counts.len() != num_classes {
        return Err(Error::Config(format!(
            "expected {num_classes} class names and train counts, got {} and {}",
            class_names.len(),
            train_counts.len()
        )));
    }
    thresholds.validate()?;
    let mut totals = vec![0usize; num_classes];
    let mut corrects = vec![0usize; num_classes];
    for (&pred, &label) in predictions.iter().zip(labels) {
        if label >= num_classes {
            return Err(Error::Data(format!(
                "label {label} out of range for {num_classes} classes"
            )));
        }
        totals[label] += 1;
        if pred == label {
            corrects[label] += 1;
        }
    }
    let overall = corrects.iter().sum::<usize>() as f64 / predictions.len() as f64;

    let mut per_class = Vec::with_capacity(num_classes);
    let mut bucket_sums = [0.0f64; 3];
    let mut bucket_counts = [0usize; 3];
    for class in 0..num_classes {
        let bucket = thresholds.bucket(train_counts[class]);
        let accuracy = if totals[class] > 0 {
            Some(corrects[class] as f64 / totals[class] as f64)
        } else {
            None
        };
        if let Some(acc) = accuracy {
            let slot = match bucket {
                ShotBucket::Many => 0,
                ShotBucket::Medium => 1,
                ShotBucket::Few => 2,
            };
            bucket_sums[slot] += acc;
            bucket_counts[slot] += 1;
        }
        per_class.push(PerClassRecord {
            class_id: class,
            class_name: class_names[class].clone(),
            train_count: train_counts[class],
            bucket,
            eval_count: totals[class],
            accuracy,
        });
    }
    let bucket_mean = |slot: usize| {
        (bucket_counts[slot] > 0).then(|| bucket_sums[slot] / bucket_counts[slot] as f64)
    };
    Ok(EvalMetrics {
        overall,
        many: bucket_mean(0),
        medium: bucket_mean(1),
        few: bucket_mean(2),
        per_class,
    })
}

/// Evaluate a model on a dataset.
pub fn evaluate(
    params: &ModelParams,
    dataset: &LabeledDataset,
    train_counts: &[usize],
    thresholds: ShotThresholds,
) -> Result<EvalMetrics> {
    let d = feature_dim(dataset.dims());
    if params.input_dim() != d {
        return Err(Error::DimMismatch(format!(
            "model expects {} features but dataset dims {:?} yield {d}",
            params.input_dim(),
            dataset.dims()
        )));
    }
    if params.num_classes() != dataset.num_classes() {
        return Err(Error::DimMismatch(format!(
            "model has {} classes, dataset declares {}",
            params.num_classes(),
            dataset.num_classes()
        )));
    }
    let features = features_matrix(dataset);
    let cache = forward_batch(params, &features);
    let predictions = predict(&cache.logits);
    let labels: Vec<usize> = dataset.samples().iter().map(|s| s.label).collect();
    metrics_from_predictions(
        &predictions,
        &labels,
        dataset.num_classes(),
        dataset.class_names(),
        train_counts,
        thresholds,
    )
}

/// One epoch's record in the training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean clean loss over the epoch.
    pub clean_loss: f64,
    /// Mean mixed loss; `None` during warm-up and in baseline mode.
    pub mixed_loss: Option<f64>,
    /// Evaluation after the epoch; `None` without an evaluation set.
    pub eval: Option<EvalSummary>,
}

/// Deterministic training report (no wall-clock content — timings travel
/// separately so byte-identical runs produce byte-identical reports).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub train_class_counts: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
    pub final_eval: Option<EvalSummary>,
    /// Per-class final evaluation; empty without an evaluation set.
    pub per_class: Vec<PerClassRecord>,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub estimation_secs: f64,
    pub mixing_secs: f64,
    pub optimization_secs: f64,
    pub evaluation_secs: f64,
    pub total_secs: f64,
}

/// Everything a training run produces.
#[derive(Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// The saliency table; `None` outside shap-mix mode.
    pub table: Option<SaliencyTable>,
    pub report: TrainReport,
    pub timings: PhaseTimings,
    pub class_stats: ClassStats,
}

/// Train a model per the configuration.
///
/// `eval_set` (when given) is evaluated after every epoch and must agree
/// with the training set on dimensions and class count.
pub fn train(
    train_set: &LabeledDataset,
    eval_set: Option<&LabeledDataset>,
    partition: &PartPartition,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    let start = Instant::now();
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let dims = train_set.dims();
    if partition.num_joints() != dims.joints {
        return Err(Error::DimMismatch(format!(
            "partition covers {} joints, dataset has {}",
            partition.num_joints(),
            dims.joints
        )));
    }
    if let Some(eval) = eval_set {
        if eval.dims() != dims {
            return Err(Error::DimMismatch(format!(
                "evaluation dims {:?} differ from training dims {dims:?}",
                eval.dims()
            )));
        }
        if eval.num_classes() != train_set.num_classes() {
            return Err(Error::DimMismatch(format!(
                "evaluation set declares {} classes, training set {}",
                eval.num_classes(),
                train_set.num_classes()
            )));
        }
    }

    let num_classes = train_set.num_classes();
    let counts = train_set.class_counts();
    let adjustments = LossConfig::new(config.loss, counts.clone()).adjustments(num_classes)?;
    let class_stats = compute_class_stats(train_set)?;

    let features = features_matrix(train_set);
    let mut one_hot = Array2::<f64>::zeros((train_set.len(), num_classes));
    for (i, sample) in train_set.samples().iter().enumerate() {
        one_hot[[i, sample.label]] = 1.0;
    }
    let eval_data = eval_set.map(|ds| {
        let labels: Vec<usize> = ds.samples().iter().map(|s| s.label).collect();
        (features_matrix(ds), labels, ds.class_names().to_vec())
    });

    let d = feature_dim(dims);
    let mut params = ModelParams::init(config.seed, d, config.hidden, num_classes);
    let mut opt_state = OptimizerState::new(&params);
    let mut table = match config.mode {
        TrainMode::ShapMix => Some(SaliencyTable::new(
            num_classes,
            AdmissibleSet::from_sizes(&config.admissible_sizes)?,
            config.ema_momentum,
        )?),
        _ => None,
    };

    let mut timings = PhaseTimings::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_records = Vec::with_capacity(config.epochs);
    let mut final_metrics: Option<EvalMetrics> = None;
    let mut global_iter: u64 = 0;

    for epoch in 0..config.epochs {
        let lr = config.optimizer.lr_at(epoch);
        let mix_active = config.mode != TrainMode::Baseline && epoch >= config.warmup_epochs;
        order.shuffle(&mut derive_rng(
            config.seed,
            StreamId::EpochShuffle,
            &[epoch as u64],
        ));

        let mut clean_loss_sum = 0.0f64;
        let mut mixed_loss_sum = 0.0f64;
        let mut sample_count = 0usize;

        for batch in order.chunks(config.batch_size) {
            // Phase 1: online saliency estimation under the labels of the
            // clean batch. Runs during warm-up too, so the table has
            // content before the first mixed loss.
            if let Some(table) = table.as_mut() {
                if global_iter % config.estimate_every as u64 == 0 {
                    let t0 = Instant::now();
                    let probe =
                        ClassProbe::new(&params, partition, &class_stats.mean_pose, dims)?;
                    for (slot, &i) in batch.iter().enumerate() {
                        let mut rng = derive_rng(
                            config.seed,
                            StreamId::SaliencyEstimate,
                            &[global_iter, slot as u64],
                        );
                        let row = features.row(i);
                        let label = train_set.label(i);
                        let draw = sample_marginal(&mut rng, table.admissible(), |keep| {
                            probe.confidence_from_features(row, label, keep)
                        });
                        table.ema_update(label, draw.coalition, draw.estimate)?;
                    }
                    timings.estimation_secs += t0.elapsed().as_secs_f64();
                }
            }

            // Phase 2: mixed batch. Mixing draws live in per-slot streams,
            // so skipping construction while the mixed loss is inactive
            // changes no other phase's randomness (and no output).
            let mixed = if mix_active {
                let t0 = Instant::now();
                let mut perm: Vec<usize> = (0..batch.len()).collect();
                perm.shuffle(&mut derive_rng(
                    config.seed,
                    StreamId::BatchPairing,
                    &[global_iter],
                ));
                let mut mixed_features = Array2::<f64>::zeros((batch.len(), d));
                let mut mixed_targets = Array2::<f64>::zeros((batch.len(), num_classes));
                for (slot, &i) in batch.iter().enumerate() {
                    let j = batch[perm[slot]];
                    let mut rng = derive_rng(
                        config.seed,
                        StreamId::SampleMix,
                        &[global_iter, slot as u64],
                    );
                    let base = (train_set.sequence(i), train_set.label(i));
                    let partner = (train_set.sequence(j), train_set.label(j));
                    let outcome = match config.mode {
                        TrainMode::StMix => st_mix(
                            &mut rng,
                            base,
                            partner,
                            num_classes,
                            partition,
                            &config.mix,
                            (i, j),
                        )?,
                        TrainMode::ShapMix => shap_mix(
                            &mut rng,
                            base,
                            partner,
                            num_classes,
                            partition,
                            &config.mix,
                            table.as_ref().expect("shap-mix has a table"),
                            &counts,
                            config.temperature,
                            (i, j),
                        )?,
                        TrainMode::Baseline => unreachable!("mixing disabled in baseline"),
                    };
                    mixed_features
                        .row_mut(slot)
                        .assign(&crate::model::extract_features(&outcome.sequence));
                    for (k, &w) in outcome.label_weights.iter().enumerate() {
                        mixed_targets[[slot, k]] = w;
                    }
                }
                timings.mixing_secs += t0.elapsed().as_secs_f64();
                Some((mixed_features, mixed_targets))
            } else {
                None
            };

            // Phase 3 + 4: losses, gradients, one optimizer step.
            let t0 = Instant::now();
            let x = features.select(Axis(0), batch);
            let y = one_hot.select(Axis(0), batch);
            let cache = forward_batch(&params, &x);
            let (probs, clean_loss) = batch_loss(&cache.logits, &y, &adjustments);
            if !clean_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "clean loss at epoch {epoch}, iteration {global_iter}"
                )));
            }
            let mut grads = backward_batch(&params, &x, &cache, &probs, &y);
            clean_loss_sum += clean_loss * batch.len() as f64;
            sample_count += batch.len();

            if let Some((mx, my)) = &mixed {
                let cache_m = forward_batch(&params, mx);
                let (probs_m, mixed_loss) = batch_loss(&cache_m.logits, my, &adjustments);
                if !mixed_loss.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "mixed loss at epoch {epoch}, iteration {global_iter}"
                    )));
                }
                let grads_m = backward_batch(&params, mx, &cache_m, &probs_m, my);
                grads.axpy(config.mixed_loss_weight, &grads_m);
                mixed_loss_sum += mixed_loss * batch.len() as f64;
            }

            sgd_step(&mut params, &mut opt_state, &grads, lr, config.optimizer.momentum);
            timings.optimization_secs += t0.elapsed().as_secs_f64();
            global_iter += 1;
        }

        if !params.is_finite() {
            return Err(Error::NonFinite(format!(
                "model parameters after epoch {epoch}"
            )));
        }

        let eval_summary = match &eval_data {
            Some((eval_features, eval_labels, eval_names)) => {
                let t0 = Instant::now();
                let cache = forward_batch(&params, eval_features);
                let predictions = predict(&cache.logits);
                let metrics = metrics_from_predictions(
                    &predictions,
                    eval_labels,
                    num_classes,
                    eval_names,
                    &counts,
                    config.shot_thresholds,
                )?;
                timings.evaluation_secs += t0.elapsed().as_secs_f64();
                let summary = metrics.summary();
                final_metrics = Some(metrics);
                Some(summary)
            }
            None => None,
        };

        epoch_records.push(EpochRecord {
            epoch,
            lr,
            clean_loss: clean_loss_sum / sample_count as f64,
            mixed_loss: mix_active.then(|| mixed_loss_sum / sample_count as f64),
            eval: eval_summary,
        });
    }

    timings.total_secs = start.elapsed().as_secs_f64();
    let report = TrainReport {
        mode: config.mode,
        train_class_counts: counts,
        epochs: epoch_records,
        final_eval: final_metrics.as_ref().map(|m| m.summary()),
        per_class: final_metrics.map(|m| m.per_class).unwrap_or_default(),
    };
    Ok(TrainOutput {
        params,
        table,
        report,
        timings,
        class_stats,
    })
}
