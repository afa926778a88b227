//! Open-set identification over precomputed deep features.
//!
//! The crate partitions a labeled feature set into gallery, training and
//! probe sets ([`protocol`]), scores probes against gallery templates with
//! cosine similarity, a PCA+LDA subspace ([`subspace`]) or an Extreme Value
//! Machine ([`evm`], calibrated by [`evt`]), and evaluates the resulting
//! [`ScoreMatrix`] with closed-set (CMC, ROC) and open-set (FAR, DIR)
//! metrics ([`evaluation`]).
//!
//! `no_std` with `alloc`. The `std` feature enables standard-library error
//! integration, `parallel` spreads EVM training and batch scoring over a
//! rayon pool, and `serde` derives (de)serialization for the model types.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod error;
pub mod evaluation;
pub mod evm;
pub mod evt;
pub mod feature;
mod par;
pub mod protocol;
pub mod scoring;
pub mod subspace;

pub use error::{Error, ErrorKind, Result};
pub use evaluation::{CurvePoint, EvalConfig, ProbeSplit, RocPoint, ThresholdPolicy};
pub use evm::{EvmConfig, EvmGalleryModel};
pub use evt::WeibullFit;
pub use feature::{
    cosine_distance, cosine_similarity, template_mean, validate_dataset, Dataset, FeatureVector, GalleryTemplate,
    ImageKey, LabeledFeature, ScoreMatrix, ValidationReport,
};
pub use protocol::{build_partition, categorize_identities, IdentityCategory, ProbeSetId, ProtocolPartition};
pub use scoring::{score_all, Fusion, ScoringMethod};
pub use subspace::{fit_lda, fit_pca, fit_subspace, LdaModel, PcaModel, SubspaceModel};
