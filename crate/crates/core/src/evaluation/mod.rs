//! Calibration, rank statistics and decision-curve analysis.

mod calibration;
mod dca;
mod rank_tests;

pub use calibration::{calibration, calibration_with, CalibrationResult, Smoother};
pub use dca::{decision_curve, default_threshold_grid, NetBenefitCurve, DEFAULT_EMPHASIS};
pub use rank_tests::{spearman, wilcoxon_signed_rank, SpearmanResult, WilcoxonResult, EXACT_WILCOXON_LIMIT};

use crate::error::{Error, Result};

fn check_binary(outcomes: &[f64]) -> Result<()> {
    match outcomes.iter().find(|&&y| y != 0.0 && y != 1.0) {
        Some(&y) => Err(Error::NonBinaryOutcome(y)),
        None => Ok(()),
    }
}

fn check_probabilities(preds: &[f64]) -> Result<()> {
    match preds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&p) => Err(Error::PredictionOutOfRange(p)),
        None => Ok(()),
    }
}
