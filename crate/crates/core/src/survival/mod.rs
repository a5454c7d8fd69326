//! Kaplan–Meier estimation, weighted Cox regression with a Breslow baseline,
//! and Harrell's concordance index.

mod concordance;
mod cox;
mod km;

pub use concordance::{harrell_c, ConcordanceReport};
pub use cox::{fit_cox, fit_cox_with, predict_risk, CoxData, CoxModel, CoxOptions, FitReport};
pub use km::{km_estimate, KmCurve};
