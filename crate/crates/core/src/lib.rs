//! A desk-scale laboratory for bi-factorial preference optimization on
//! tabular softmax policies.
//!
//! The crate trains policies with the BFPO, DPO and IPO losses, solves for
//! the KL-regularized optimum of the bilinear safety/helpfulness reward, and
//! audits by exact enumeration when the supervised objective and the
//! reward-based objective share their gradients.
//!
//! Layout:
//! - [`policy`], [`truth`], [`dataset`]: action spaces, ground truths, preference data.
//! - [`labeling`]: the safety-aware label function `g_I`.
//! - [`reward`]: expected safety, the global reward `g` and its optimal policy.
//! - [`losses`]: per-pair and batch losses with analytic gradients.
//! - [`equivalence`]: the enumeration auditor.
//! - [`optim`]: seeded Adam training and the least-squares oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod equivalence;
pub mod error;
pub mod labeling;
pub mod losses;
pub mod optim;
pub mod par;
pub mod policy;
pub mod reward;
pub mod truth;

pub use dataset::{all_pairs_dataset, LabelMode, PreferenceDataset, PreferenceRecord, Source};
pub use error::{Error, Result};
pub use labeling::{LabelConfig, LabelTable};
pub use losses::{LossKind, PairSampling};
pub use policy::{ActionSpace, TabularPolicy};
pub use reward::RewardConfig;
pub use truth::GroundTruth;

/// The four-action illustrative setup: helpfulness `y1 > y2 > y3 > y4`,
/// safety `(1, 0, 1, 0)`.
pub fn illustrative_ground_truth() -> GroundTruth {
    truth::ground_truth_from_order(&[0, 1, 2, 3], &[1, 0, 1, 0]).expect("fixed setup is valid")
}
