//! Sampling, characteristic-function estimation and invariance testing for
//! real symmetric random matrices, plus a pipeline that recognizes
//! shifted and scaled GOE ensembles.

// `!(x > 0.0)` style checks are intentional: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cf;
pub mod characterize;
pub mod ensembles;
pub mod error;
pub mod invariance;
pub mod par;
pub mod plot;
pub mod report;
pub mod rng;
pub mod stats;
pub mod symcore;

pub use cf::{cf_distance, ecf_scalar, ecf_trace, CfDistance, EcfEstimate, TGrid};
pub use characterize::{
    characterize, characterize_samples, CharacterizationReport, CharacterizeConfig, Verdict,
};
pub use ensembles::{sample_batch, EnsembleKind, EnsembleSpec, SampleSet};
pub use error::{Error, Result};
pub use invariance::{test_conjugation_invariance, InvarianceReport};
pub use rng::SeedSpec;
pub use symcore::{OrthogonalMatrix, SymMatrix};
