//! Gaussian kernel density estimation and plug-in KL divergence.
//!
//! All densities live on z-scored coordinates: each dimension is centred and
//! scaled with the statistics of a reference sample (the *source* cohort),
//! after which a single isotropic bandwidth applies. Densities are therefore
//! reported per unit of standardized volume.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, HorizonSample};
use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum, population_sd};

/// Densities below this are clamped before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Per-dimension affine map `z -> (z - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Population mean and sd of each column; constant columns keep unit scale.
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySample)?;
        let dim = first.len();
        check_dims(points, dim)?;
        let mut m = Vec::with_capacity(dim);
        let mut s = Vec::with_capacity(dim);
        for j in 0..dim {
            let col: Vec<f64> = points.iter().map(|p| p[j]).collect();
            m.push(mean(&col));
            let sd = population_sd(&col);
            s.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Ok(Self { mean: m, scale: s })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn check_dims(points: &[Vec<f64>], dim: usize) -> Result<()> {
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.len(),
            });
        }
    }
    Ok(())
}

/// Scott's rule on unit-scale data: `n^(-1/(D+4))`.
pub fn scott_bandwidth(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let dim = points[0].len();
    check_dims(points, dim)?;
    Ok(scott_factor(points.len(), dim))
}

pub fn scott_factor(n: usize, dim: usize) -> f64 {
    (n as f64).powf(-1.0 / (dim as f64 + 4.0))
}

/// Bandwidth selection for KL and covariate-weight estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Scott's rule sized by the source sample.
    #[default]
    Scott,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, n_source: usize, dim: usize) -> Result<f64> {
        match self {
            Bandwidth::Scott => {
                if n_source < 2 {
                    return Err(Error::TooFewPoints(n_source));
                }
                Ok(scott_factor(n_source, dim))
            }
            Bandwidth::Fixed(b) if b > 0.0 && b.is_finite() => Ok(b),
            Bandwidth::Fixed(b) => Err(Error::InvalidBandwidth(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    /// Support points on standardized coordinates, row-major `n x D`.
    support: Vec<f64>,
    n: usize,
    dim: usize,
    bandwidth: f64,
    standardization: Standardization,
    norm: f64,
}

impl DensityEstimate {
    pub fn new(points: &[Vec<f64>], bandwidth: f64, standardization: Standardization) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        let dim = standardization.dim();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        check_dims(points, dim)?;
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidBandwidth(bandwidth));
        }
        let support: Vec<f64> = points.iter().flat_map(|p| standardization.apply(p)).collect();
        let norm = (2.0 * PI).powf(-(dim as f64) / 2.0) * bandwidth.powi(-(dim as i32));
        Ok(Self {
            support,
            n: points.len(),
            dim,
            bandwidth,
            standardization,
            norm,
        })
    }

    /// Standardizes with the points' own statistics and applies Scott's rule.
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let b = scott_bandwidth(points)?;
        Self::new(points, b, Standardization::fit(points)?)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Density at a point given in original coordinates.
    pub fn density(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        Ok(self.density_standardized(&self.standardization.apply(query)))
    }

    /// Density at a point already mapped by this estimate's standardization.
    pub fn density_standardized(&self, z: &[f64]) -> f64 {
        let inv = -0.5 / (self.bandwidth * self.bandwidth);
        let mut acc = 0.0;
        for row in self.support.chunks_exact(self.dim) {
            let mut r2 = 0.0;
            for (a, b) in row.iter().zip(z) {
                let d = a - b;
                r2 += d * d;
            }
            acc += (r2 * inv).exp();
        }
        acc * self.norm / self.n as f64
    }
}

pub fn kde_density(estimate: &DensityEstimate, query: &[f64]) -> Result<f64> {
    estimate.density(query)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub value: f64,
    pub n_source: usize,
    pub n_target: usize,
    pub bandwidth: f64,
    pub floor_hits: usize,
}

/// `z_i = [x_i, y_i]` for every horizon-determinate patient.
pub fn joint_points(sample: &HorizonSample) -> Vec<Vec<f64>> {
    sample
        .entries
        .iter()
        .map(|e| {
            let mut z = e.covariates.clone();
            z.push(if e.y { 1.0 } else { 0.0 });
            z
        })
        .collect()
}

/// KL(source || target) between two cohorts on the joint covariate/outcome
/// vector, with source-statistics standardization and a shared bandwidth.
pub fn kl_divergence(
    source: (&Cohort, &HorizonSample),
    target: (&Cohort, &HorizonSample),
    bandwidth: Bandwidth,
) -> Result<KlReport> {
    if source.0.covariate_names != target.0.covariate_names {
        return Err(Error::CovariateNameMismatch {
            source_name: source.0.name.clone(),
            target_name: target.0.name.clone(),
        });
    }
    kl_between_points(&joint_points(source.1), &joint_points(target.1), bandwidth)
}

/// Plug-in KL estimate between two point clouds of equal dimension.
pub fn kl_between_points(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    bandwidth: Bandwidth,
) -> Result<KlReport> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptySample);
    }
    let dim = source[0].len();
    check_dims(target, dim)?;
    let standardization = Standardization::fit(source)?;
    let b = bandwidth.resolve(source.len(), dim)?;
    let p_source = DensityEstimate::new(source, b, standardization.clone())?;
    let p_target = DensityEstimate::new(target, b, standardization)?;

    let terms: Vec<(f64, usize)> = p_source
        .support
        .par_chunks_exact(dim)
        .map(|z| {
            let s = p_source.density_standardized(z);
            let t = p_target.density_standardized(z);
            let hits = usize::from(s < DENSITY_FLOOR) + usize::from(t < DENSITY_FLOOR);
            ((s.max(DENSITY_FLOOR) / t.max(DENSITY_FLOOR)).ln(), hits)
        })
        .collect();
    let logs: Vec<f64> = terms.iter().map(|t| t.0).collect();
    Ok(KlReport {
        value: pairwise_sum(&logs) / source.len() as f64,
        n_source: source.len(),
        n_target: target.len(),
        bandwidth: b,
        floor_hits: terms.iter().map(|t| t.1).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian_1d(n: usize, mu: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng::stream(seed, "kde-test", 0);
        (0..n)
            .map(|_| vec![mu + r.sample::<f64, _>(StandardNormal)])
            .collect()
    }

    #[test]
    fn scott_closed_form() {
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, 0.0]).collect();
        assert!((scott_bandwidth(&pts).unwrap() - 0.464_158_883_361_277_9).abs() < 1e-12);
        assert!((scott_factor(10_000, 8) - 0.464_158_883_361_277_9).abs() < 1e-12);
        assert!(matches!(scott_bandwidth(&[vec![1.0]]), Err(Error::TooFewPoints(1))));
    }

    #[test]
    fn kernel_at_zero() {
        let est = DensityEstimate::new(&[vec![3.0]], 1.0, Standardization::fit(&[vec![3.0]]).unwrap()).unwrap();
        let d = est.density(&[3.0]).unwrap();
        assert!((d - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn symmetric_two_point_sum() {
        let pts = vec![vec![-1.0], vec![1.0]];
        let est = DensityEstimate::new(&pts, 1.0, Standardization::fit(&pts).unwrap()).unwrap();
        let expected = (2.0 * PI).powf(-0.5) * (-0.5f64).exp();
        assert!((est.density(&[0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.24197).abs() < 1e-5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let pts = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let est = DensityEstimate::fit(&pts).unwrap();
        assert!(matches!(est.density(&[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn standard_normal_density_at_origin() {
        let pts = gaussian_1d(5000, 0.0, 11);
        let est = DensityEstimate::fit(&pts).unwrap();
        let d = est.density(&[0.0]).unwrap();
        let truth = (2.0 * PI).powf(-0.5);
        assert!((d - truth).abs() / truth < 0.10, "{d}");
    }

    #[test]
    fn integrates_to_one() {
        let pts = gaussian_1d(200, 2.0, 5);
        let est = DensityEstimate::fit(&pts).unwrap();
        // trapezoid on standardized coordinates over [-12, 12]
        let (lo, hi, steps) = (-12.0, 12.0, 24_000);
        let h = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for k in 0..=steps {
            let z = lo + k as f64 * h;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            total += w * est.density_standardized(&[z]);
        }
        assert!((total * h - 1.0).abs() < 1e-3, "{}", total * h);
    }

    #[test]
    fn self_divergence_is_exactly_zero() {
        let pts = gaussian_1d(300, 0.0, 1);
        let r = kl_between_points(&pts, &pts, Bandwidth::Scott).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.floor_hits, 0);
    }

    #[test]
    fn separated_clusters_diverge_strongly() {
        let a = gaussian_1d(500, -10.0, 2);
        let b = gaussian_1d(500, 10.0, 3);
        let r = kl_between_points(&a, &b, Bandwidth::Scott).unwrap();
        assert!(r.value > 5.0);
        assert!(r.floor_hits > 0);
    }

    #[test]
    fn fixed_bandwidth_validated() {
        let a = gaussian_1d(10, 0.0, 2);
        assert!(kl_between_points(&a, &a, Bandwidth::Fixed(0.0)).is_err());
        assert_eq!(kl_between_points(&a, &a, Bandwidth::Fixed(0.3)).unwrap().bandwidth, 0.3);
    }

    #[test]
    fn monotone_in_mean_separation() {
        let base = gaussian_1d(2000, 0.0, 21);
        let mut last = f64::NEG_INFINITY;
        for (k, delta) in [0.0, 0.5, 1.0, 2.0].into_iter().enumerate() {
            let other = gaussian_1d(2000, delta, 100 + k as u64);
            let v = kl_between_points(&base, &other, Bandwidth::Scott).unwrap().value;
            assert!(v > last, "delta {delta}: {v} <= {last}");
            last = v;
        }
    }
}
