use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure carries the name of the module that rejected the input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cohort: missing column `{0}`")]
    MissingColumn(String),
    #[error("cohort: non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("cohort: nonpositive time at row {0}")]
    NonPositiveTime(usize),
    #[error("cohort: unknown event code `{code}` at row {row} (expected 0 or 1)")]
    UnknownEventCode { row: usize, code: String },
    #[error("cohort: unknown treatment code `{code}` at row {row} (expected 0 or 1)")]
    UnknownTreatmentCode { row: usize, code: String },
    #[error("cohort: missing covariate value in column `{column}` at row {row}")]
    MissingValue { row: usize, column: String },
    #[error("cohort: record {row} has {found} covariates, expected {expected}")]
    RaggedCovariates {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cohort: `{name}` has {n} records, fewer than 2d = {floor}")]
    TooFewRecords { name: String, n: usize, floor: usize },
    #[error("cohort: duplicate cohort name `{0}`")]
    DuplicateCohortName(String),
    #[error("cohort: no horizon-determinate patients ({excluded} excluded)")]
    NoDeterminatePatients { excluded: usize },
    #[error("cohort: horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("meta: outcome mean {0} outside [0, 1]")]
    OutcomeMeanRange(f64),
    #[error("meta: nonpositive standard deviation {sd} for `{name}`")]
    NonPositiveSd { name: String, sd: f64 },
    #[error("meta: covariate `{0}` is not present in the cohort")]
    UnknownMetaCovariate(String),
    #[error("meta: cohort covariate `{0}` has no meta-analysis summary")]
    MissingMetaCovariate(String),

    #[error("density: need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("density: dimension mismatch (expected {expected}, got {found})")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("density: bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("density: covariate names differ between `{source_name}` and `{target_name}`")]
    CovariateNameMismatch {
        source_name: String,
        target_name: String,
    },
    #[error("density: empty sample")]
    EmptySample,

    #[error("survival: no events in cohort")]
    NoEvents,
    #[error("survival: covariate `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("survival: weights must be strictly positive and finite with length {expected}, got {found}")]
    InvalidWeights { expected: usize, found: usize },
    #[error("survival: Cox fit diverged after {iterations} iterations (monotone likelihood?)")]
    Diverged { iterations: usize },
    #[error("survival: Cox fit did not converge in {iterations} iterations (gradient max-norm {gradient:e})")]
    NotConverged { iterations: usize, gradient: f64 },
    #[error("survival: risk vector has length {found}, cohort has {expected} records")]
    LengthMismatch { expected: usize, found: usize },
    #[error("survival: no usable pairs for concordance")]
    NoUsablePairs,
    #[error("survival: risk score {0} is not finite")]
    NonFiniteRisk(f64),
    #[error("survival: model has no coefficient for covariate `{0}`")]
    MissingCoefficient(String),

    #[error("weights: stratum count {m} invalid for {n} risks (need n >= m >= 2)")]
    InvalidStrataCount { n: usize, m: usize },
    #[error("weights: risk {0} outside [0, 1]")]
    RiskOutOfRange(f64),
    #[error("weights: degenerate risk distribution (quantile boundaries collapse)")]
    DegenerateRisks,
    #[error("weights: training stratum {0} is empty")]
    EmptyStratum(usize),
    #[error("weights: meta outcome distribution puts no mass on [0, 1]")]
    NoMetaMass,
    #[error("weights: expected {expected} weights, got {found}")]
    WeightLengthMismatch { expected: usize, found: usize },
    #[error("weights: expected a `{expected}` weight set, got `{found}`")]
    WrongWeightKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("weights: covariance matrix is not symmetric")]
    AsymmetricCovariance,

    #[error("evaluation: need at least {required} observations, got {found}")]
    TooFewObservations { required: usize, found: usize },
    #[error("evaluation: prediction {0} outside [0, 1]")]
    PredictionOutOfRange(f64),
    #[error("evaluation: outcomes must be 0 or 1, got {0}")]
    NonBinaryOutcome(f64),
    #[error("evaluation: degenerate predictions, value {value} has only {count} observations (need 20)")]
    DegeneratePredictions { value: f64, count: usize },
    #[error("evaluation: zero variance in input")]
    ZeroVarianceInput,
    #[error("evaluation: all differences are zero")]
    AllDifferencesZero,
    #[error("evaluation: threshold grid is empty")]
    EmptyGrid,
    #[error("evaluation: threshold {0} outside (0, 1)")]
    ThresholdOutOfRange(f64),

    #[error("selection: value {0} outside [0, 1]")]
    DistanceInputRange(f64),
    #[error("selection: no candidate model cards")]
    NoCards,
    #[error("selection: horizon {horizon} lies beyond all target follow-up (max {max_time})")]
    HorizonBeyondFollowUp { horizon: f64, max_time: f64 },

    #[error("simulator: covariance matrix for `{0}` is not positive definite")]
    NotPositiveDefinite(String),
    #[error("simulator: invalid cohort spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("simulator: experiment needs at least 3 cohort specs, got {0}")]
    TooFewSpecs(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
