//! Patient cohorts, horizon outcomes and meta-analysis summaries.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HORIZON: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub covariates: Vec<f64>,
    /// Follow-up time in months.
    pub time: f64,
    /// Recurrence observed.
    pub event: bool,
    /// Adjuvant chemotherapy.
    pub treatment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub name: String,
    pub covariate_names: Vec<String>,
    pub records: Vec<PatientRecord>,
}

impl Cohort {
    /// Validates record shape, times and the `n >= 2d` fitting floor.
    pub fn new(
        name: impl Into<String>,
        covariate_names: Vec<String>,
        records: Vec<PatientRecord>,
    ) -> Result<Self> {
        let name = name.into();
        let d = covariate_names.len();
        for (row, r) in records.iter().enumerate() {
            if r.covariates.len() != d {
                return Err(Error::RaggedCovariates {
                    row: row + 1,
                    expected: d,
                    found: r.covariates.len(),
                });
            }
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::NonPositiveTime(row + 1));
            }
            if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingValue {
                    row: row + 1,
                    column: covariate_names[j].clone(),
                });
            }
        }
        if records.len() < 2 * d.max(1) {
            return Err(Error::TooFewRecords {
                name,
                n: records.len(),
                floor: 2 * d.max(1),
            });
        }
        Ok(Self {
            name,
            covariate_names,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn covariate_rows(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.covariates.clone()).collect()
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    /// Sub-cohort of records matching `keep`; skips the size floor so that
    /// small strata (e.g. treated patients) can still be inspected.
    pub fn filter(&self, name: impl Into<String>, keep: impl Fn(&PatientRecord) -> bool) -> Cohort {
        Cohort {
            name: name.into(),
            covariate_names: self.covariate_names.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// Rejects duplicate names within one multi-cohort analysis.
pub fn check_unique_names<'a>(cohorts: impl IntoIterator<Item = &'a Cohort>) -> Result<()> {
    let mut seen = HashSet::new();
    for c in cohorts {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::DuplicateCohortName(c.name.clone()));
        }
    }
    Ok(())
}

/// Column mapping for cohort CSV files. The defaults match the canonical
/// header `id,time,event,treatment,<covariates...>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub event: String,
    pub treatment: String,
    /// Explicit covariate columns; `None` takes every remaining column in
    /// header order.
    pub covariates: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            event: "event".into(),
            treatment: "treatment".into(),
            covariates: None,
        }
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim() {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Reads a cohort CSV. The cohort is named after the file stem.
pub fn load_cohort(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Cohort> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cohort".to_string());
    read_cohort(File::open(path)?, name, schema)
}

pub fn read_cohort(reader: impl Read, name: impl Into<String>, schema: &CsvSchema) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col(&schema.id)?;
    let time_col = col(&schema.time)?;
    let event_col = col(&schema.event)?;
    let treat_col = col(&schema.treatment)?;
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, time_col, event_col, treat_col].contains(i))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if covariate_names.is_empty() {
        return Err(Error::MissingColumn("<covariate>".into()));
    }
    let cov_cols = covariate_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let k = i + 1;
        let field = |c: usize| row.get(c).unwrap_or("");
        let number = |c: usize| -> Result<f64> {
            let raw = field(c);
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue {
                    row: k,
                    column: header[c].clone(),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::NonNumeric {
                row: k,
                column: header[c].clone(),
                value: raw.to_string(),
            })
        };
        let time = number(time_col)?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::NonPositiveTime(k));
        }
        let event = parse_flag(field(event_col)).ok_or_else(|| Error::UnknownEventCode {
            row: k,
            code: field(event_col).to_string(),
        })?;
        let treatment = parse_flag(field(treat_col)).ok_or_else(|| Error::UnknownTreatmentCode {
            row: k,
            code: field(treat_col).to_string(),
        })?;
        let covariates = cov_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        records.push(PatientRecord {
            id: field(id_col).to_string(),
            covariates,
            time,
            event,
            treatment,
        });
    }
    Cohort::new(name, covariate_names, records)
}

/// Writes the canonical CSV layout. Reals use the shortest representation
/// that parses back to the same bits.
pub fn write_cohort(cohort: &Cohort, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "time".into(), "event".into(), "treatment".into()];
    header.extend(cohort.covariate_names.iter().cloned());
    w.write_record(&header)?;
    for r in &cohort.records {
        let mut row = vec![
            r.id.clone(),
            r.time.to_string(),
            u8::from(r.event).to_string(),
            u8::from(r.treatment).to_string(),
        ];
        row.extend(r.covariates.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    write_cohort(cohort, File::create(path)?)
}

/// What to do with patients censored before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoringPolicy {
    #[default]
    ExcludeCensored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEntry {
    /// Index of the source record in the cohort.
    pub index: usize,
    pub covariates: Vec<f64>,
    pub y: bool,
}

/// Binary horizon outcomes for the horizon-determinate patients of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSample {
    pub horizon: f64,
    pub entries: Vec<HorizonEntry>,
    pub excluded_count: usize,
}

impl HorizonSample {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| if e.y { 1.0 } else { 0.0 }).collect()
    }

    pub fn prevalence(&self) -> f64 {
        self.entries.iter().filter(|e| e.y).count() as f64 / self.entries.len() as f64
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }
}

/// y = 1 for an event at or before the horizon, y = 0 for follow-up past
/// the horizon; everyone else is counted as excluded.
pub fn derive_horizon_outcomes(
    cohort: &Cohort,
    horizon: f64,
    policy: CensoringPolicy,
) -> Result<HorizonSample> {
    if !(horizon > 0.0) {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    let CensoringPolicy::ExcludeCensored = policy;
    let mut entries = Vec::with_capacity(cohort.len());
    let mut excluded = 0;
    for (index, r) in cohort.records.iter().enumerate() {
        let y = if r.event && r.time <= horizon {
            Some(true)
        } else if r.time > horizon {
            Some(false)
        } else {
            None
        };
        match y {
            Some(y) => entries.push(HorizonEntry {
                index,
                covariates: r.covariates.clone(),
                y,
            }),
            None => excluded += 1,
        }
    }
    if entries.is_empty() {
        return Err(Error::NoDeterminatePatients { excluded });
    }
    Ok(HorizonSample {
        horizon,
        entries,
        excluded_count: excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateStat {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeStat {
    pub mean: f64,
    pub sd: f64,
}

/// Published aggregate statistics standing in for the general population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSummary {
    pub outcome: OutcomeStat,
    #[serde(default)]
    pub covariates: Vec<CovariateStat>,
}

impl MetaSummary {
    pub fn new(outcome_mean: f64, outcome_sd: f64, covariates: Vec<CovariateStat>) -> Result<Self> {
        let meta = Self {
            outcome: OutcomeStat {
                mean: outcome_mean,
                sd: outcome_sd,
            },
            covariates,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn outcome_mean(&self) -> f64 {
        self.outcome.mean
    }

    pub fn outcome_sd(&self) -> f64 {
        self.outcome.sd
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.outcome.mean) {
            return Err(Error::OutcomeMeanRange(self.outcome.mean));
        }
        if !(self.outcome.sd > 0.0 && self.outcome.sd.is_finite()) {
            return Err(Error::NonPositiveSd {
                name: "outcome".into(),
                sd: self.outcome.sd,
            });
        }
        for c in &self.covariates {
            if !(c.sd > 0.0 && c.sd.is_finite()) {
                return Err(Error::NonPositiveSd {
                    name: c.name.clone(),
                    sd: c.sd,
                });
            }
        }
        Ok(())
    }

    /// Means and sds reordered to `names`; every summary name must be a
    /// cohort covariate and every cohort covariate must be summarised.
    pub fn aligned_covariates(&self, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
        for c in &self.covariates {
            if !names.contains(&c.name) {
                return Err(Error::UnknownMetaCovariate(c.name.clone()));
            }
        }
        let mut means = Vec::with_capacity(names.len());
        let mut sds = Vec::with_capacity(names.len());
        for n in names {
            let stat = self
                .covariates
                .iter()
                .find(|c| &c.name == n)
                .ok_or_else(|| Error::MissingMetaCovariate(n.clone()))?;
            means.push(stat.mean);
            sds.push(stat.sd);
        }
        Ok((means, sds))
    }
}

pub fn parse_meta_summary(json: &str) -> Result<MetaSummary> {
    let meta: MetaSummary = serde_json::from_str(json)?;
    meta.validate()?;
    Ok(meta)
}

pub fn load_meta_summary(path: impl AsRef<Path>) -> Result<MetaSummary> {
    parse_meta_summary(&std::fs::read_to_string(path)?)
}
