//! Training with a chosen weighting scheme: unweighted fit, weights, refit.

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, MetaSummary};
use crate::density::Bandwidth;
use crate::error::Result;
use crate::survival::{fit_cox, CoxModel};
use crate::weights::{
    concept_weights, covariance, covariate_weights, default_meta_size, joint_weights, simulate_meta_covariates,
    stratify, WeightKind, WeightSet, DEFAULT_STRATA,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub strata: usize,
    /// Meta covariate sample size; `None` uses `max(10 n, 5000)`.
    pub n_meta: Option<usize>,
    pub bandwidth: Bandwidth,
    pub seed: u64,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        Self {
            strata: DEFAULT_STRATA,
            n_meta: None,
            bandwidth: Bandwidth::Scott,
            seed: 0,
        }
    }
}

/// Weights of the requested kind for a training cohort. Concept weights
/// stratify horizon risks of an unweighted fit on the same cohort.
pub fn compute_weights(
    cohort: &Cohort,
    meta: &MetaSummary,
    kind: WeightKind,
    horizon: f64,
    config: &WeightingConfig,
) -> Result<WeightSet> {
    let concept = |c: &Cohort| -> Result<WeightSet> {
        let base = fit_cox(c, None)?;
        let risks = base.predict_cohort(c, horizon)?;
        let strata = stratify(&risks, config.strata)?;
        concept_weights(&risks, &strata, meta)
    };
    let covariate = |c: &Cohort| -> Result<WeightSet> {
        let x = c.covariate_rows();
        let n_meta = config.n_meta.unwrap_or_else(|| default_meta_size(c.len()));
        let sample = simulate_meta_covariates(meta, &c.covariate_names, &covariance(&x), n_meta, config.seed)?;
        let mut w = covariate_weights(&x, &sample.points, config.bandwidth)?;
        w.provenance.covariance_repaired = sample.repaired;
        Ok(w)
    };
    match kind {
        WeightKind::None => Ok(WeightSet::uniform(cohort.len())),
        WeightKind::Concept => concept(cohort),
        WeightKind::Covariate => covariate(cohort),
        WeightKind::Joint => joint_weights(&concept(cohort)?, &covariate(cohort)?),
    }
}

/// Fits the final Cox model under `kind` weighting.
pub fn train(
    cohort: &Cohort,
    meta: &MetaSummary,
    kind: WeightKind,
    horizon: f64,
    config: &WeightingConfig,
) -> Result<(CoxModel, WeightSet)> {
    let weights = compute_weights(cohort, meta, kind, horizon, config)?;
    let model = match kind {
        WeightKind::None => fit_cox(cohort, None)?,
        _ => fit_cox(cohort, Some(&weights))?,
    };
    Ok((model, weights))
}
