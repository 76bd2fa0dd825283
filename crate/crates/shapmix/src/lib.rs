//! Shap-Mix: saliency-guided spatial-temporal mixing augmentation for
//! long-tailed skeleton-based action recognition.
//!
//! The crate is organised around a small pipeline:
//!
//! * [`data`] — skeleton tensors `(C, T, V, M)`, body-part partitions,
//!   long-tailed subsampling, a synthetic motion generator, and on-disk
//!   dataset layout.
//! * [`mix`] — the spatial-temporal mixing engine: global Mixup and
//!   part-level Cut-Mix with temporally down-sampled source clips.
//! * [`saliency`] — Shapley values over body-part coalitions, estimated
//!   online with single-marginal Monte-Carlo draws folded into an EMA table.
//! * [`policy`] — the tail-aware part-selection policy that turns saliency
//!   into a sampling distribution over coalitions and decides which side of
//!   a mixed pair keeps its salient parts.
//! * [`model`] — a deterministic two-layer MLP on pooled pose+motion
//!   features with plain or balanced-softmax cross-entropy and analytic
//!   gradients.
//! * [`train`] — the training loop tying everything together, plus the
//!   evaluation harness with many/medium/few-shot breakdowns.
//!
//! All randomness flows through [`rng`]: every consumer derives its own
//! counter-based stream from the master seed, so results are reproducible
//! regardless of iteration order or which phases are enabled.

pub mod data;
pub mod error;
pub mod mix;
pub mod model;
pub mod numeric;
pub mod policy;
pub mod rng;
pub mod saliency;
pub mod train;

pub use error::{Error, Result};
