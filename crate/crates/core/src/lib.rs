//! Survival risk models that stay calibrated under cohort shift.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohort;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod simulator;
pub mod survival;
pub mod weights;

pub use cohort::{
    derive_horizon_outcomes, load_cohort, load_meta_summary, CensoringPolicy, Cohort, CsvSchema, HorizonSample,
    MetaSummary, PatientRecord, DEFAULT_HORIZON,
};
pub use density::{kl_divergence, Bandwidth, KlReport};
pub use error::{Error, Result};
pub use pipeline::{compute_weights, train, WeightingConfig};
pub use selection::{cohort_distance, rank_models, ModelCard, SelectionRanking};
pub use survival::{fit_cox, harrell_c, km_estimate, CoxModel};
pub use weights::{WeightKind, WeightSet};
