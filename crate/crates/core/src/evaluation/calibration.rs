use serde::{Deserialize, Serialize};

use super::{check_binary, check_probabilities};
use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum, quantile_sorted, sample_sd};

const MIN_OBSERVATIONS: usize = 20;
const CURVE_POINTS: usize = 101;
/// At most this many distinct prediction values switch to exact group means.
const DISCRETE_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Smoother {
    /// Nadaraya–Watson with a Gaussian kernel and Silverman bandwidth.
    #[default]
    Kernel,
    /// Ten equal-count bins.
    Bins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// `(predicted, smoothed observed)` pairs across the prediction range.
    pub curve: Vec<(f64, f64)>,
    pub ici: f64,
    pub smoother: Smoother,
    /// Zero when exact group means were used.
    pub smoother_bandwidth: f64,
}

pub fn calibration(preds: &[f64], outcomes: &[f64]) -> Result<CalibrationResult> {
    calibration_with(preds, outcomes, Smoother::Kernel)
}

/// ICI = mean |p_i - o(p_i)| with `o` a smoothed outcome-on-prediction curve.
pub fn calibration_with(preds: &[f64], outcomes: &[f64], smoother: Smoother) -> Result<CalibrationResult> {
    if outcomes.is_empty() {
        return Err(Error::EmptySample);
    }
    if preds.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            expected: outcomes.len(),
            found: preds.len(),
        });
    }
    if preds.len() < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            required: MIN_OBSERVATIONS,
            found: preds.len(),
        });
    }
    check_probabilities(preds)?;
    check_binary(outcomes)?;

    let mut levels = preds.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let discrete = levels.len() <= DISCRETE_LEVELS;
    let mut bandwidth = 0.0;
    let model: Box<dyn Fn(f64) -> f64> = if discrete {
        let groups = group_means(preds, outcomes, &levels)?;
        Box::new(move |p| {
            let k = levels.partition_point(|&l| l < p).min(levels.len() - 1);
            groups[k]
        })
    } else {
        match smoother {
            Smoother::Kernel => {
                let h = silverman(preds);
                bandwidth = h;
                let (xs, ys) = (preds.to_vec(), outcomes.to_vec());
                Box::new(move |p| nadaraya_watson(&xs, &ys, h, p))
            }
            Smoother::Bins => {
                let (edges, means) = quantile_bins(preds, outcomes);
                Box::new(move |p| {
                    let k = edges.partition_point(|&e| e < p).min(means.len() - 1);
                    means[k]
                })
            }
        }
    };
    let gaps: Vec<f64> = preds.iter().map(|&p| (p - model(p).clamp(0.0, 1.0)).abs()).collect();
    let ici = pairwise_sum(&gaps) / preds.len() as f64;
    let (lo, hi) = preds.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
    let curve = (0..CURVE_POINTS)
        .map(|k| {
            let p = lo + (hi - lo) * k as f64 / (CURVE_POINTS - 1) as f64;
            (p, model(p).clamp(0.0, 1.0))
        })
        .collect();
    Ok(CalibrationResult {
        curve,
        ici,
        smoother,
        smoother_bandwidth: bandwidth,
    })
}

fn group_means(preds: &[f64], outcomes: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; levels.len()];
    let mut counts = vec![0usize; levels.len()];
    for (&p, &y) in preds.iter().zip(outcomes) {
        let k = levels.partition_point(|&l| l < p);
        sums[k] += y;
        counts[k] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c < MIN_OBSERVATIONS) {
        return Err(Error::DegeneratePredictions {
            value: levels[k],
            count: counts[k],
        });
    }
    Ok(sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect())
}

/// `0.9 min(sd, IQR/1.34) n^(-1/5)`, falling back to sd when the IQR is zero.
fn silverman(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sd = sample_sd(x);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (x.len() as f64).powf(-0.2)
}

fn nadaraya_watson(xs: &[f64], ys: &[f64], h: f64, at: f64) -> f64 {
    let inv = -0.5 / (h * h);
    let (mut num, mut den) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let k = ((x - at) * (x - at) * inv).exp();
        num += k * y;
        den += k;
    }
    if den > 0.0 {
        num / den
    } else {
        mean(ys)
    }
}

fn quantile_bins(preds: &[f64], outcomes: &[f64]) -> (Vec<f64>, Vec<f64>) {
    const BINS: usize = 10;
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].total_cmp(&preds[b]));
    let n = preds.len();
    let mut edges = Vec::new();
    let mut means = Vec::new();
    for b in 0..BINS {
        let (s, e) = (b * n / BINS, (b + 1) * n / BINS);
        if s == e {
            continue;
        }
        let ys: Vec<f64> = order[s..e].iter().map(|&i| outcomes[i]).collect();
        means.push(mean(&ys));
        edges.push(preds[order[e - 1]]);
    }
    (edges, means)
}
