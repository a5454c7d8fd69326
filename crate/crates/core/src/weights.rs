//! Importance weights from meta-analysis summaries.
//!
//! Concept weights compare the training cohort's predicted-risk strata with
//! the stratum mass of a normal outcome distribution `R ~ N(mu_y, sigma_y)`
//! built from a meta-analysis. Covariate weights compare KDE densities of the
//! training covariates and of a synthetic meta-population drawn with the
//! training cohort's off-diagonal covariance. Joint weights multiply the two.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cohort::MetaSummary;
use crate::density::{Bandwidth, DensityEstimate, Standardization};
use crate::error::{Error, Result};
use crate::numeric::{mean, normal_cdf, pairwise_sum};
use crate::rng;

pub const DEFAULT_STRATA: usize = 8;
pub const WEIGHT_FLOOR: f64 = 1e-6;
pub const WEIGHT_CAP: f64 = 1e6;
pub const EIGEN_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    /// `m + 1` increasing boundaries from 0 to 1.
    pub boundaries: Vec<f64>,
    pub assignment: Vec<usize>,
    pub counts: Vec<usize>,
    pub q_train: Vec<f64>,
    /// Filled in by [`meta_strata_mass`]; empty until then.
    pub q_meta: Vec<f64>,
}

impl Strata {
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stratum of a risk under `l_k < r <= u_k`, with 0 belonging to the first.
    pub fn locate(&self, risk: f64) -> usize {
        let m = self.len();
        self.boundaries[1..m].partition_point(|&u| u < risk)
    }
}

/// Equal-count strata at the empirical quantiles `k/m` of the risks.
pub fn stratify(risks: &[f64], m: usize) -> Result<Strata> {
    let n = risks.len();
    if m < 2 || n < m {
        return Err(Error::InvalidStrataCount { n, m });
    }
    if let Some(r) = risks.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::RiskOutOfRange(*r));
    }
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut boundaries = Vec::with_capacity(m + 1);
    boundaries.push(0.0);
    for k in 1..m {
        let c = k * n / m;
        boundaries.push(0.5 * (sorted[c - 1] + sorted[c]));
    }
    boundaries.push(1.0);
    if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::DegenerateRisks);
    }
    let mut strata = Strata {
        boundaries,
        assignment: Vec::with_capacity(n),
        counts: vec![0; m],
        q_train: Vec::new(),
        q_meta: Vec::new(),
    };
    for &r in risks {
        let k = strata.locate(r);
        strata.assignment.push(k);
        strata.counts[k] += 1;
    }
    if strata.counts.contains(&0) {
        return Err(Error::DegenerateRisks);
    }
    strata.q_train = strata.counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(strata)
}

/// `P(l_k < R <= u_k)` for `R ~ N(mu_y, sigma_y)`, renormalized over [0, 1].
pub fn meta_strata_mass(meta: &MetaSummary, strata: &Strata) -> Result<Vec<f64>> {
    let (mu, sigma) = (meta.outcome_mean(), meta.outcome_sd());
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSd {
            name: "outcome".into(),
            sd: sigma,
        });
    }
    let cdf: Vec<f64> = strata
        .boundaries
        .iter()
        .map(|b| normal_cdf((b - mu) / sigma))
        .collect();
    let raw: Vec<f64> = cdf.windows(2).map(|w| w[1] - w[0]).collect();
    let total = pairwise_sum(&raw);
    if !(total > 0.0) {
        return Err(Error::NoMetaMass);
    }
    Ok(raw.iter().map(|q| q / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    #[default]
    None,
    Concept,
    Covariate,
    Joint,
}

impl WeightKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightKind::None => "none",
            WeightKind::Concept => "concept",
            WeightKind::Covariate => "covariate",
            WeightKind::Joint => "joint",
        }
    }
}

impl std::fmt::Display for WeightKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for WeightKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(WeightKind::None),
            "concept" => Ok(WeightKind::Concept),
            "covariate" => Ok(WeightKind::Covariate),
            "joint" => Ok(WeightKind::Joint),
            other => Err(format!("unknown weighting `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strata: Option<Strata>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_meta: Option<usize>,
    /// Density ratios clamped at the floor or the cap.
    pub clamped: usize,
    /// Assumption-based meta covariance needed eigenvalue repair.
    pub covariance_repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub kind: WeightKind,
    /// Positive, mean one.
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl WeightSet {
    pub fn uniform(n: usize) -> Self {
        Self {
            kind: WeightKind::None,
            values: vec![1.0; n],
            provenance: Provenance::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn normalize_mean_one(raw: &[f64]) -> Vec<f64> {
    let m = mean(raw);
    raw.iter().map(|v| v / m).collect()
}

/// `q_meta[s(i)] / q_train[s(i)]`, normalized to mean one.
pub fn concept_weights(risks: &[f64], strata: &Strata, meta: &MetaSummary) -> Result<WeightSet> {
    if risks.len() != strata.assignment.len() {
        return Err(Error::WeightLengthMismatch {
            expected: strata.assignment.len(),
            found: risks.len(),
        });
    }
    let q_meta = meta_strata_mass(meta, strata)?;
    concept_weights_from_mass(strata, &q_meta)
}

/// Concept weights for an explicit meta stratum mass vector.
pub fn concept_weights_from_mass(strata: &Strata, q_meta: &[f64]) -> Result<WeightSet> {
    if q_meta.len() != strata.len() {
        return Err(Error::WeightLengthMismatch {
            expected: strata.len(),
            found: q_meta.len(),
        });
    }
    if let Some(k) = strata.q_train.iter().position(|&q| !(q > 0.0)) {
        return Err(Error::EmptyStratum(k));
    }
    let raw: Vec<f64> = strata
        .assignment
        .iter()
        .map(|&k| (q_meta[k] / strata.q_train[k]).max(f64::MIN_POSITIVE))
        .collect();
    let mut summary = strata.clone();
    summary.q_meta = q_meta.to_vec();
    summary.assignment.clear();
    Ok(WeightSet {
        kind: WeightKind::Concept,
        values: normalize_mean_one(&raw),
        provenance: Provenance {
            strata: Some(summary),
            ..Provenance::default()
        },
    })
}

/// Population covariance of the rows of `x`.
pub fn covariance(x: &[Vec<f64>]) -> DMatrix<f64> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let means: Vec<f64> = (0..d)
        .map(|j| mean(&x.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    DMatrix::from_fn(d, d, |i, j| {
        let prods: Vec<f64> = x.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).collect();
        pairwise_sum(&prods) / n as f64
    })
}

/// Meta-population covariance: reported variances on the diagonal, training
/// covariances off it. Returns the (possibly repaired) matrix and whether
/// eigenvalue clipping was needed.
pub fn meta_covariance(meta_sd: &[f64], train_cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let d = meta_sd.len();
    if train_cov.nrows() != d || train_cov.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: train_cov.nrows(),
        });
    }
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (train_cov[(i, j)], train_cov[(j, i)]);
            if (a - b).abs() > 1e-10 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::AsymmetricCovariance);
            }
        }
    }
    let sigma = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            meta_sd[i] * meta_sd[i]
        } else {
            0.5 * (train_cov[(i, j)] + train_cov[(j, i)])
        }
    });
    let eig = sigma.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= EIGEN_FLOOR && sigma.clone().cholesky().is_some() {
        return Ok((sigma, false));
    }
    let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let repaired = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let repaired = (&repaired + repaired.transpose()) * 0.5;
    Ok((repaired, true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaSample {
    pub points: Vec<Vec<f64>>,
    pub covariance: DMatrix<f64>,
    pub repaired: bool,
}

/// Draws `n_meta` rows from `N(mu_meta, Sigma_meta)`. Row `i` uses its own
/// counter-addressed stream, so the sample is reproducible from the seed.
pub fn simulate_meta_covariates(
    meta: &MetaSummary,
    covariate_names: &[String],
    train_cov: &DMatrix<f64>,
    n_meta: usize,
    seed: u64,
) -> Result<MetaSample> {
    let (mu, sd) = meta.aligned_covariates(covariate_names)?;
    let (sigma, repaired) = meta_covariance(&sd, train_cov)?;
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("meta".into()))?;
    let l = chol.l();
    let d = mu.len();
    let points = (0..n_meta)
        .map(|i| {
            let mut r = rng::stream(seed, "meta-covariates", i as u64);
            let z = DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)));
            let x = &l * z;
            x.iter().zip(&mu).map(|(a, m)| a + m).collect()
        })
        .collect();
    Ok(MetaSample {
        points,
        covariance: sigma,
        repaired,
    })
}

pub fn default_meta_size(n_train: usize) -> usize {
    (10 * n_train).max(5000)
}

/// `p_meta(x_i) / p_train(x_i)` from two KDEs sharing the training-data
/// standardization and bandwidth, clamped to `[1e-6, 1e6]`.
pub fn covariate_weights(
    train_x: &[Vec<f64>],
    meta_sample: &[Vec<f64>],
    bandwidth: Bandwidth,
) -> Result<WeightSet> {
    if meta_sample.len() < 2 {
        return Err(Error::TooFewPoints(meta_sample.len()));
    }
    let d = train_x.first().ok_or(Error::EmptySample)?.len();
    if let Some(p) = meta_sample.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.len(),
        });
    }
    let standardization = Standardization::fit(train_x)?;
    let b = bandwidth.resolve(train_x.len(), d)?;
    let p_train = DensityEstimate::new(train_x, b, standardization.clone())?;
    let p_meta = DensityEstimate::new(meta_sample, b, standardization.clone())?;
    use rayon::prelude::*;
    let raw: Vec<f64> = train_x
        .par_iter()
        .map(|x| {
            let z = standardization.apply(x);
            p_meta.density_standardized(&z) / p_train.density_standardized(&z)
        })
        .collect();
    let mut clamped = 0;
    let raw: Vec<f64> = raw
        .into_iter()
        .map(|r| {
            if r.is_nan() || r < WEIGHT_FLOOR {
                clamped += 1;
                WEIGHT_FLOOR
            } else if r > WEIGHT_CAP {
                clamped += 1;
                WEIGHT_CAP
            } else {
                r
            }
        })
        .collect();
    Ok(WeightSet {
        kind: WeightKind::Covariate,
        values: normalize_mean_one(&raw),
        provenance: Provenance {
            bandwidth: Some(b),
            n_meta: Some(meta_sample.len()),
            clamped,
            ..Provenance::default()
        },
    })
}

/// Elementwise product of concept and covariate weights, mean one.
pub fn joint_weights(concept: &WeightSet, covariate: &WeightSet) -> Result<WeightSet> {
    if concept.kind != WeightKind::Concept {
        return Err(Error::WrongWeightKind {
            expected: "concept",
            found: concept.kind.as_str(),
        });
    }
    if covariate.kind != WeightKind::Covariate {
        return Err(Error::WrongWeightKind {
            expected: "covariate",
            found: covariate.kind.as_str(),
        });
    }
    if concept.len() != covariate.len() {
        return Err(Error::WeightLengthMismatch {
            expected: concept.len(),
            found: covariate.len(),
        });
    }
    let raw: Vec<f64> = concept
        .values
        .iter()
        .zip(&covariate.values)
        .map(|(a, b)| a * b)
        .collect();
    Ok(WeightSet {
        kind: WeightKind::Joint,
        values: normalize_mean_one(&raw),
        provenance: Provenance {
            strata: concept.provenance.strata.clone(),
            bandwidth: covariate.provenance.bandwidth,
            n_meta: covariate.provenance.n_meta,
            clamped: covariate.provenance.clamped,
            covariance_repaired: covariate.provenance.covariance_repaired,
        },
    })
}
