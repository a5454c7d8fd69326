//! Fixtures shared by the benchmarks.

use cohortshift_core::simulator::{simulate_cohort, ExperimentConfig};
use cohortshift_core::{derive_horizon_outcomes, CensoringPolicy, Cohort, HorizonSample, DEFAULT_HORIZON};

/// Cohort `index` (0..5) of the graded preset with `n` patients.
pub fn cohort(n: usize, index: usize, seed: u64) -> Cohort {
    let spec = &ExperimentConfig::graded(n).cohorts[index];
    simulate_cohort(spec, seed, DEFAULT_HORIZON).expect("preset specs are valid").0
}

pub fn with_outcomes(cohort: Cohort) -> (Cohort, HorizonSample) {
    let sample = derive_horizon_outcomes(&cohort, DEFAULT_HORIZON, CensoringPolicy::ExcludeCensored)
        .expect("preset cohorts have determinate patients");
    (cohort, sample)
}
