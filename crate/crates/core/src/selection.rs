//! Model cards and outcome-summary based model selection for a target cohort.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cohort::{derive_horizon_outcomes, CensoringPolicy, Cohort};
use crate::error::{Error, Result};
use crate::evaluation::calibration;
use crate::survival::{km_estimate, CoxModel, FitReport};
use crate::weights::WeightKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub cohort_name: String,
    pub n: usize,
    /// Kaplan–Meier survival at the horizon in the training cohort.
    pub km_at_horizon: f64,
    pub weighting_kind: WeightKind,
    pub horizon: f64,
}

/// A published model: fitted Cox model plus the training-cohort outcome
/// summary needed to compare it against a target cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCard {
    pub model: CoxModel,
    pub training: TrainingSummary,
}

#[derive(Serialize, Deserialize)]
struct CardJson {
    coefficients: IndexMap<String, f64>,
    baseline: Vec<[f64; 2]>,
    covariate_means: IndexMap<String, f64>,
    training: TrainingSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fit: Option<FitReport>,
}

impl Serialize for ModelCard {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m = &self.model;
        CardJson {
            coefficients: m.covariate_names.iter().cloned().zip(m.coefficients.iter().copied()).collect(),
            baseline: m.baseline_cum_hazard.iter().map(|&(t, h)| [t, h]).collect(),
            covariate_means: m.covariate_names.iter().cloned().zip(m.covariate_means.iter().copied()).collect(),
            training: self.training.clone(),
            fit: Some(m.fit_report.clone()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelCard {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let card = CardJson::deserialize(d)?;
        let names: Vec<String> = card.coefficients.keys().cloned().collect();
        let covariate_means = names
            .iter()
            .map(|n| {
                card.covariate_means
                    .get(n)
                    .copied()
                    .ok_or_else(|| D::Error::custom(format!("covariate_means lacks `{n}`")))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if !(0.0..=1.0).contains(&card.training.km_at_horizon) {
            return Err(D::Error::custom("km_at_horizon outside [0, 1]"));
        }
        Ok(ModelCard {
            model: CoxModel {
                coefficients: card.coefficients.values().copied().collect(),
                covariate_names: names,
                covariate_means,
                baseline_cum_hazard: card.baseline.iter().map(|p| (p[0], p[1])).collect(),
                fit_report: card.fit.unwrap_or(FitReport {
                    iterations: 0,
                    gradient_norm: 0.0,
                    log_partial_likelihood: 0.0,
                }),
            },
            training: card.training,
        })
    }
}

impl ModelCard {
    pub fn new(model: CoxModel, cohort: &Cohort, horizon: f64, weighting_kind: WeightKind) -> Self {
        let (_, km) = km_estimate(cohort, horizon);
        Self {
            model,
            training: TrainingSummary {
                cohort_name: cohort.name.clone(),
                n: cohort.len(),
                km_at_horizon: km,
                weighting_kind,
                horizon,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Every `*.json` model card in a registry directory, in file-name order.
pub fn load_registry(dir: impl AsRef<Path>) -> Result<Vec<ModelCard>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(ModelCard::load).collect()
}

/// Euclidean distance between outcome summaries; for the scalar horizon
/// Kaplan–Meier estimate this is `|km_train - km_test|`.
pub fn cohort_distance(km_train: f64, km_test: f64) -> Result<f64> {
    summary_distance(&[km_train], &[km_test])
}

/// Distance between vector-valued summaries (e.g. several horizons).
pub fn summary_distance(train: &[f64], test: &[f64]) -> Result<f64> {
    if train.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: train.len(),
            found: test.len(),
        });
    }
    if let Some(&v) = train.iter().chain(test).find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::DistanceInputRange(v));
    }
    Ok(train
        .iter()
        .zip(test)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCard {
    pub card: ModelCard,
    pub distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_ici: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionRanking {
    pub target_name: String,
    pub target_km: f64,
    pub horizon: f64,
    pub entries: Vec<RankedCard>,
}

impl SelectionRanking {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,training_cohort,weighting,n_train,km_train,distance,observed_ici\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i + 1,
                e.card.training.cohort_name,
                e.card.training.weighting_kind,
                e.card.training.n,
                e.card.training.km_at_horizon,
                e.distance,
                e.observed_ici.map(|v| v.to_string()).unwrap_or_default()
            ));
        }
        out
    }
}

/// Observed ICI of a card's horizon predictions on a cohort.
pub fn card_ici(card: &ModelCard, target: &Cohort, horizon: f64) -> Result<f64> {
    let sample = derive_horizon_outcomes(target, horizon, CensoringPolicy::ExcludeCensored)?;
    let risks = card.model.predict_cohort(target, horizon)?;
    let preds: Vec<f64> = sample.indices().iter().map(|&i| risks[i]).collect();
    Ok(calibration(&preds, &sample.outcomes())?.ici)
}

/// Orders cards by distance to the target's horizon KM estimate; ties go to
/// the larger training cohort, then to the lexicographically smaller name.
pub fn rank_models(cards: &[ModelCard], target: &Cohort, horizon: f64, audit: bool) -> Result<SelectionRanking> {
    if cards.is_empty() {
        return Err(Error::NoCards);
    }
    if target.is_empty() {
        return Err(Error::EmptySample);
    }
    let max_time = target.max_time();
    if horizon > max_time {
        return Err(Error::HorizonBeyondFollowUp { horizon, max_time });
    }
    let (_, target_km) = km_estimate(target, horizon);
    let mut entries = cards
        .iter()
        .map(|card| {
            Ok(RankedCard {
                distance: cohort_distance(card.training.km_at_horizon, target_km)?,
                observed_ici: if audit { Some(card_ici(card, target, horizon)?) } else { None },
                card: card.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(b.card.training.n.cmp(&a.card.training.n))
            .then_with(|| a.card.training.cohort_name.cmp(&b.card.training.cohort_name))
            .then_with(|| a.card.training.weighting_kind.as_str().cmp(b.card.training.weighting_kind.as_str()))
    });
    Ok(SelectionRanking {
        target_name: target.name.clone(),
        target_km,
        horizon,
        entries,
    })
}
