//! Synthetic multi-cohort generator with known ground truth.
//!
//! Event times follow a Weibull proportional-hazards model whose log-hazard
//! is `x'(beta + delta) + sum_j curvature_j * x_j^2`, plus `ln(multiplier)`
//! for carriers of an unobserved prognostic factor.

mod suite;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::rng;

pub use suite::{
    pooled_meta, scenario_suite, write_bundle, CellResult, ExperimentBundle, ExperimentConfig, KlIciRow, SelectionRow,
    SuiteSummary, WeightingSummary, REQUIRED_TABLES,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoringWindow {
    pub c_min: f64,
    pub c_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenFactor {
    pub prevalence: f64,
    pub hazard_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub name: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariate_names: Vec<String>,
    pub covariate_mean: Vec<f64>,
    pub covariate_cov: Vec<Vec<f64>>,
    pub hazard_coefficients: Vec<f64>,
    pub baseline: Weibull,
    pub censoring: CensoringWindow,
    /// Added to `hazard_coefficients`; empty means no perturbation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub concept_shift: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_factor: Option<HiddenFactor>,
    /// Per-covariate quadratic log-hazard terms; empty means linear.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curvature: Vec<f64>,
    #[serde(default)]
    pub treated_fraction: f64,
}

/// Per-patient oracle values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Horizon risk given covariates and hidden-factor status.
    pub risk: Vec<f64>,
    /// Covariate density under the spec.
    pub density: Vec<f64>,
    pub hidden: Vec<bool>,
    pub horizon: f64,
}

impl GroundTruth {
    pub fn mean_risk(&self) -> f64 {
        crate::numeric::mean(&self.risk)
    }
}

struct Mvn {
    mean: DVector<f64>,
    l: DMatrix<f64>,
    log_norm: f64,
}

impl Mvn {
    fn log_density(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self
            .l
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }

    fn sample(&self, r: &mut impl Rng) -> Vec<f64> {
        let d = self.mean.len();
        let z = DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)));
        (&self.l * z + &self.mean).iter().copied().collect()
    }
}

impl CohortSpec {
    pub fn dim(&self) -> usize {
        self.covariate_mean.len()
    }

    /// Declared names, or `x1..xd`.
    pub fn names(&self) -> Vec<String> {
        if self.covariate_names.is_empty() {
            (1..=self.dim()).map(|j| format!("x{j}")).collect()
        } else {
            self.covariate_names.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidSpec {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        let d = self.dim();
        if self.name.is_empty() {
            return bad("empty name");
        }
        if self.n < 50 {
            return bad("n must be at least 50");
        }
        if d == 0 {
            return bad("no covariates");
        }
        if !self.covariate_names.is_empty() && self.covariate_names.len() != d {
            return bad("covariate_names length differs from covariate_mean");
        }
        if self.hazard_coefficients.len() != d
            || (!self.concept_shift.is_empty() && self.concept_shift.len() != d)
            || (!self.curvature.is_empty() && self.curvature.len() != d)
        {
            return bad("coefficient vectors must have one entry per covariate");
        }
        if self.covariate_cov.len() != d || self.covariate_cov.iter().any(|r| r.len() != d) {
            return bad("covariate_cov must be d x d");
        }
        for i in 0..d {
            for j in 0..i {
                if self.covariate_cov[i][j] != self.covariate_cov[j][i] {
                    return bad("covariate_cov is not symmetric");
                }
            }
        }
        let values = self
            .covariate_mean
            .iter()
            .chain(self.covariate_cov.iter().flatten())
            .chain(&self.hazard_coefficients)
            .chain(&self.concept_shift)
            .chain(&self.curvature);
        if values.clone().any(|v| !v.is_finite()) {
            return bad("non-finite parameter");
        }
        if !(self.baseline.shape > 0.0 && self.baseline.scale > 0.0) {
            return bad("Weibull shape and scale must be positive");
        }
        let c = self.censoring;
        if !(c.c_min > 0.0 && c.c_max > c.c_min) {
            return bad("censoring window must satisfy c_max > c_min > 0");
        }
        if let Some(h) = self.hidden_factor {
            if !(0.0..=1.0).contains(&h.prevalence) || !(h.hazard_multiplier > 0.0) {
                return bad("hidden factor needs prevalence in [0,1] and a positive multiplier");
            }
        }
        if !(0.0..=1.0).contains(&self.treated_fraction) {
            return bad("treated_fraction outside [0,1]");
        }
        self.mvn().map(|_| ())
    }

    fn mvn(&self) -> Result<Mvn> {
        let d = self.dim();
        let cov = DMatrix::from_fn(d, d, |i, j| self.covariate_cov[i][j]);
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(format!("covariate_cov of `{}`", self.name)))?;
        let l = chol.l();
        let log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
        Ok(Mvn {
            mean: DVector::from_column_slice(&self.covariate_mean),
            l,
            log_norm: -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - log_det,
        })
    }

    pub fn linear_predictor(&self, x: &[f64], hidden: bool) -> f64 {
        let mut lp = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            let beta = self.hazard_coefficients[j] + self.concept_shift.get(j).copied().unwrap_or(0.0);
            let gamma = self.curvature.get(j).copied().unwrap_or(0.0);
            lp += beta * xj + gamma * xj * xj;
        }
        match self.hidden_factor {
            Some(h) if hidden => lp + h.hazard_multiplier.ln(),
            _ => lp,
        }
    }

    /// `1 - exp(-(t/scale)^shape * exp(lp))`.
    pub fn horizon_risk(&self, x: &[f64], hidden: bool, horizon: f64) -> f64 {
        let h = (horizon / self.baseline.scale).powf(self.baseline.shape) * self.linear_predictor(x, hidden).exp();
        -(-h).exp_m1()
    }

    /// Horizon risk given covariates only, averaging over the hidden factor.
    pub fn marginal_risk(&self, x: &[f64], horizon: f64) -> f64 {
        match self.hidden_factor {
            Some(h) => {
                h.prevalence * self.horizon_risk(x, true, horizon)
                    + (1.0 - h.prevalence) * self.horizon_risk(x, false, horizon)
            }
            None => self.horizon_risk(x, false, horizon),
        }
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.mvn()?.log_density(x))
    }
}

/// Draws a cohort. Patient `i` uses its own random stream keyed by
/// `(seed, spec.name, i)`, so cohorts never share or shift each other's draws.
pub fn simulate_cohort(spec: &CohortSpec, seed: u64, horizon: f64) -> Result<(Cohort, GroundTruth)> {
    spec.validate()?;
    let mvn = spec.mvn()?;
    let Weibull { shape, scale } = spec.baseline;
    let CensoringWindow { c_min, c_max } = spec.censoring;
    let mut records = Vec::with_capacity(spec.n);
    let mut truth = GroundTruth {
        risk: Vec::with_capacity(spec.n),
        density: Vec::with_capacity(spec.n),
        hidden: Vec::with_capacity(spec.n),
        horizon,
    };
    for i in 0..spec.n {
        let mut r = rng::stream(seed, &spec.name, i as u64);
        let x = mvn.sample(&mut r);
        let hidden_draw: f64 = r.random();
        let hidden = spec.hidden_factor.is_some_and(|h| hidden_draw < h.prevalence);
        let e: f64 = r.sample(Exp1);
        let event_time = (scale * (e * (-spec.linear_predictor(&x, hidden)).exp()).powf(1.0 / shape)).max(f64::MIN_POSITIVE);
        let censor_time = r.random_range(c_min..c_max);
        let treated = r.random::<f64>() < spec.treated_fraction;

        truth.risk.push(spec.horizon_risk(&x, hidden, horizon));
        truth.density.push(mvn.log_density(&x).exp());
        truth.hidden.push(hidden);
        records.push(PatientRecord {
            id: format!("{}-{i:05}", spec.name),
            covariates: x,
            time: event_time.min(censor_time),
            event: event_time <= censor_time,
            treatment: treated,
        });
    }
    Ok((Cohort::new(spec.name.clone(), spec.names(), records)?, truth))
}

/// Exact `p_b / p_a` at a covariate vector; with an outcome `(y, horizon)`
/// the ratio also includes `P_b(y | x) / P_a(y | x)` marginal over the
/// hidden factor.
pub fn true_density_ratio(spec_a: &CohortSpec, spec_b: &CohortSpec, x: &[f64], outcome: Option<(bool, f64)>) -> Result<f64> {
    if spec_a.dim() != spec_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec_a.dim(),
            found: spec_b.dim(),
        });
    }
    let mut ratio = (spec_b.log_density(x)? - spec_a.log_density(x)?).exp();
    if let Some((y, horizon)) = outcome {
        let (pa, pb) = (spec_a.marginal_risk(x, horizon), spec_b.marginal_risk(x, horizon));
        ratio *= if y { pb / pa } else { (1.0 - pb) / (1.0 - pa) };
    }
    Ok(ratio)
}
