use serde::{Deserialize, Serialize};

use super::{check_binary, check_probabilities};
use crate::error::{Error, Result};

/// Threshold window emphasised when reporting where a model wins.
pub const DEFAULT_EMPHASIS: (f64, f64) = (0.10, 0.70);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetBenefitCurve {
    pub thresholds: Vec<f64>,
    pub nb_model: Vec<f64>,
    pub nb_treat_all: Vec<f64>,
    pub nb_treat_none: Vec<f64>,
    pub prevalence: f64,
    /// Maximum model net benefit inside the emphasis window.
    pub max_net_benefit: f64,
    /// Closed threshold intervals inside the emphasis window where the
    /// model beats both default strategies.
    pub winning_range: Vec<(f64, f64)>,
    pub emphasis: (f64, f64),
}

/// 0.01, 0.02, ..., 0.99.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

pub fn decision_curve(
    preds: &[f64],
    outcomes: &[f64],
    thresholds: &[f64],
    emphasis: (f64, f64),
) -> Result<NetBenefitCurve> {
    if thresholds.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(&t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::ThresholdOutOfRange(t));
    }
    if outcomes.is_empty() {
        return Err(Error::EmptySample);
    }
    if preds.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            expected: outcomes.len(),
            found: preds.len(),
        });
    }
    check_probabilities(preds)?;
    check_binary(outcomes)?;

    let n = preds.len() as f64;
    let positives = outcomes.iter().filter(|&&y| y == 1.0).count() as f64;
    let prevalence = positives / n;
    let mut nb_model = Vec::with_capacity(thresholds.len());
    let mut nb_treat_all = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let odds = t / (1.0 - t);
        let (mut tp, mut fp) = (0usize, 0usize);
        for (&p, &y) in preds.iter().zip(outcomes) {
            if p >= t {
                if y == 1.0 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        nb_model.push((tp as f64 - fp as f64 * odds) / n);
        nb_treat_all.push(prevalence - (1.0 - prevalence) * odds);
    }

    let in_window = |t: f64| t >= emphasis.0 - 1e-12 && t <= emphasis.1 + 1e-12;
    let max_net_benefit = thresholds
        .iter()
        .zip(&nb_model)
        .filter(|(t, _)| in_window(**t))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut winning_range = Vec::new();
    let mut open: Option<(f64, f64)> = None;
    for (i, &t) in thresholds.iter().enumerate() {
        let wins = in_window(t) && nb_model[i] > nb_treat_all[i] && nb_model[i] > 0.0;
        match (wins, open.as_mut()) {
            (true, Some(range)) => range.1 = t,
            (true, None) => open = Some((t, t)),
            (false, Some(_)) => winning_range.extend(open.take()),
            (false, None) => {}
        }
    }
    winning_range.extend(open);

    Ok(NetBenefitCurve {
        thresholds: thresholds.to_vec(),
        nb_treat_none: vec![0.0; thresholds.len()],
        nb_model,
        nb_treat_all,
        prevalence,
        max_net_benefit,
        winning_range,
        emphasis,
    })
}
