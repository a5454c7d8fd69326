//! Pairwise train/evaluate grid over a set of simulated cohorts.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_cohort, CensoringWindow, CohortSpec, GroundTruth, HiddenFactor, Weibull};
use crate::cohort::{
    check_unique_names, derive_horizon_outcomes, save_cohort, CensoringPolicy, Cohort, CovariateStat, HorizonSample,
    MetaSummary, DEFAULT_HORIZON,
};
use crate::density::{kl_divergence, Bandwidth};
use crate::error::{Error, Result};
use crate::evaluation::{
    calibration, decision_curve, default_threshold_grid, spearman, wilcoxon_signed_rank, NetBenefitCurve,
    SpearmanResult, WilcoxonResult, DEFAULT_EMPHASIS,
};
use crate::numeric::{mean, pairwise_sum, population_sd, quantile_sorted};
use crate::pipeline::{train, WeightingConfig};
use crate::selection::{rank_models, ModelCard};
use crate::survival::harrell_c;
use crate::weights::{WeightKind, DEFAULT_STRATA};

/// Files every complete bundle contains.
pub const REQUIRED_TABLES: [&str; 6] = [
    "kl_ici.csv",
    "weighting.csv",
    "selection.csv",
    "calibration.csv",
    "dca.csv",
    "summary.json",
];

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_strata() -> usize {
    DEFAULT_STRATA
}

fn default_weightings() -> Vec<WeightKind> {
    vec![WeightKind::None, WeightKind::Concept, WeightKind::Joint]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub cohorts: Vec<CohortSpec>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_strata")]
    pub strata: usize,
    /// Fixed KDE bandwidth for KL and covariate weights; Scott when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_meta: Option<usize>,
    #[serde(default = "default_weightings")]
    pub weightings: Vec<WeightKind>,
    /// Published population summary; pooled from the simulated cohorts
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaSummary>,
}

impl ExperimentConfig {
    /// Five cohorts with graded covariate and hidden-factor shift; horizon
    /// outcome prevalence rises from about 0.25 to about 0.6.
    pub fn graded(n: usize) -> Self {
        let specs = (0..5)
            .map(|k| {
                let k = k as f64;
                CohortSpec {
                    name: format!("site{}", k as usize + 1),
                    n,
                    covariate_names: vec!["marker".into(), "nodes".into(), "size".into()],
                    covariate_mean: vec![-0.8 + 0.4 * k, -0.4 + 0.2 * k, 0.0],
                    covariate_cov: vec![vec![1.0, 0.3, 0.1], vec![0.3, 1.0, 0.2], vec![0.1, 0.2, 1.0]],
                    hazard_coefficients: vec![0.5, 0.4, 0.3],
                    baseline: Weibull { shape: 1.3, scale: 165.0 },
                    censoring: CensoringWindow { c_min: 60.0, c_max: 120.0 },
                    concept_shift: vec![],
                    hidden_factor: Some(HiddenFactor {
                        prevalence: 0.1 + 0.1 * k,
                        hazard_multiplier: 2.5,
                    }),
                    curvature: vec![0.25, 0.0, 0.0],
                    treated_fraction: 0.0,
                }
            })
            .collect();
        Self::with_cohorts(specs)
    }

    /// Five draws from one population.
    pub fn null(n: usize) -> Self {
        let mut config = Self::graded(n);
        let template = config.cohorts[2].clone();
        for (k, spec) in config.cohorts.iter_mut().enumerate() {
            *spec = CohortSpec {
                name: format!("site{}", k + 1),
                ..template.clone()
            };
        }
        config
    }

    pub fn with_cohorts(cohorts: Vec<CohortSpec>) -> Self {
        Self {
            cohorts,
            horizon: DEFAULT_HORIZON,
            strata: DEFAULT_STRATA,
            bandwidth: None,
            n_meta: None,
            weightings: default_weightings(),
            meta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cohorts.len() < 3 {
            return Err(Error::TooFewSpecs(self.cohorts.len()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::NonPositiveHorizon(self.horizon));
        }
        let mut seen = std::collections::HashSet::new();
        for spec in &self.cohorts {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::DuplicateCohortName(spec.name.clone()));
            }
        }
        if !self.weightings.contains(&WeightKind::None) {
            return Err(Error::InvalidSpec {
                name: "experiment".into(),
                reason: "weightings must include `none`".into(),
            });
        }
        Ok(())
    }

    fn bandwidth(&self) -> Bandwidth {
        self.bandwidth.map_or(Bandwidth::Scott, Bandwidth::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlIciRow {
    pub train: String,
    pub test: String,
    pub kl: f64,
    pub floor_hits: usize,
    /// ICI of the unweighted model.
    pub ici: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub train: String,
    pub test: String,
    pub weighting: WeightKind,
    pub ici: f64,
    pub c_index: f64,
    pub n_evaluated: usize,
    pub excluded: usize,
    #[serde(skip)]
    pub curve: Vec<(f64, f64)>,
    #[serde(skip)]
    pub dca: Option<NetBenefitCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub target: String,
    pub train: String,
    pub distance: f64,
    pub rank: usize,
    pub ici: f64,
    /// Position of this card when candidates are ordered by target ICI.
    pub ici_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingSummary {
    pub weighting: WeightKind,
    pub median_ici: f64,
    pub mean_ici: f64,
    pub mean_c_index: f64,
    /// Against the unweighted cells; absent for `none`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wilcoxon_vs_none: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub seed: u64,
    pub cells: usize,
    pub kl_ici_spearman: Option<SpearmanResult>,
    pub weighting: Vec<WeightingSummary>,
    pub distance_ici_spearman: Option<SpearmanResult>,
    /// Targets whose distance-rank-1 model has the lowest or second-lowest ICI.
    pub rank1_top2: usize,
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentBundle {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub meta: MetaSummary,
    pub cohorts: Vec<Cohort>,
    pub truths: Vec<GroundTruth>,
    pub cards: Vec<ModelCard>,
    pub kl_ici: Vec<KlIciRow>,
    pub cells: Vec<CellResult>,
    pub selection: Vec<SelectionRow>,
    pub summary: SuiteSummary,
}

impl ExperimentBundle {
    pub fn cells_for(&self, kind: WeightKind) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(move |c| c.weighting == kind)
    }
}

/// Meta summary of the pooled simulated population: outcome from the true
/// horizon risks, covariates from the pooled draws.
pub fn pooled_meta(cohorts: &[Cohort], truths: &[GroundTruth]) -> Result<MetaSummary> {
    let risks: Vec<f64> = truths.iter().flat_map(|t| t.risk.iter().copied()).collect();
    let names = &cohorts[0].covariate_names;
    let covariates = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let column: Vec<f64> = cohorts
                .iter()
                .flat_map(|c| c.records.iter().map(move |r| r.covariates[j]))
                .collect();
            CovariateStat {
                name: name.clone(),
                mean: mean(&column),
                sd: population_sd(&column),
            }
        })
        .collect();
    MetaSummary::new(mean(&risks), population_sd(&risks), covariates)
}

fn evaluate_cell(card: &ModelCard, test: &Cohort, sample: &HorizonSample, horizon: f64) -> Result<CellResult> {
    let risks = card.model.predict_cohort(test, horizon)?;
    let preds: Vec<f64> = sample.indices().iter().map(|&i| risks[i]).collect();
    let outcomes = sample.outcomes();
    let cal = calibration(&preds, &outcomes)?;
    let dca = decision_curve(&preds, &outcomes, &default_threshold_grid(), DEFAULT_EMPHASIS)?;
    Ok(CellResult {
        train: card.training.cohort_name.clone(),
        test: test.name.clone(),
        weighting: card.training.weighting_kind,
        ici: cal.ici,
        c_index: harrell_c(&risks, test)?.c_index,
        n_evaluated: sample.len(),
        excluded: sample.excluded_count,
        curve: cal.curve,
        dca: Some(dca),
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}

/// Generates every cohort, trains one model per (cohort, weighting), and
/// evaluates each model on every other cohort. Runs on the current rayon
/// pool; output does not depend on its size.
pub fn scenario_suite(config: &ExperimentConfig, seed: u64) -> Result<ExperimentBundle> {
    config.validate()?;
    let horizon = config.horizon;
    let generated = config
        .cohorts
        .par_iter()
        .map(|spec| simulate_cohort(spec, seed, horizon))
        .collect::<Result<Vec<_>>>()?;
    let (cohorts, truths): (Vec<Cohort>, Vec<GroundTruth>) = generated.into_iter().unzip();
    check_unique_names(&cohorts)?;
    let samples = cohorts
        .iter()
        .map(|c| derive_horizon_outcomes(c, horizon, CensoringPolicy::ExcludeCensored))
        .collect::<Result<Vec<_>>>()?;
    let meta = match &config.meta {
        Some(m) => m.clone(),
        None => pooled_meta(&cohorts, &truths)?,
    };

    let weighting = WeightingConfig {
        strata: config.strata,
        n_meta: config.n_meta,
        bandwidth: config.bandwidth(),
        seed,
    };
    let jobs: Vec<(usize, WeightKind)> = (0..cohorts.len())
        .flat_map(|i| config.weightings.iter().map(move |&k| (i, k)))
        .collect();
    let cards = jobs
        .par_iter()
        .map(|&(i, kind)| {
            let (model, _) = train(&cohorts[i], &meta, kind, horizon, &weighting)?;
            Ok(ModelCard::new(model, &cohorts[i], horizon, kind))
        })
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..cohorts.len())
        .flat_map(|i| (0..cohorts.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let kls = pairs
        .par_iter()
        .map(|&(i, j)| kl_divergence((&cohorts[i], &samples[i]), (&cohorts[j], &samples[j]), config.bandwidth()))
        .collect::<Result<Vec<_>>>()?;
    let cell_jobs: Vec<(usize, usize)> = (0..cards.len())
        .flat_map(|c| {
            let i = jobs[c].0;
            (0..cohorts.len()).filter(move |&j| j != i).map(move |j| (c, j))
        })
        .collect();
    let cells = cell_jobs
        .par_iter()
        .map(|&(c, j)| evaluate_cell(&cards[c], &cohorts[j], &samples[j], horizon))
        .collect::<Result<Vec<_>>>()?;

    let unweighted_ici = |train: &str, test: &str| -> f64 {
        cells
            .iter()
            .find(|c| c.weighting == WeightKind::None && c.train == train && c.test == test)
            .map(|c| c.ici)
            .expect("every ordered pair has an unweighted cell")
    };
    let kl_ici: Vec<KlIciRow> = pairs
        .iter()
        .zip(&kls)
        .map(|(&(i, j), kl)| KlIciRow {
            train: cohorts[i].name.clone(),
            test: cohorts[j].name.clone(),
            kl: kl.value,
            floor_hits: kl.floor_hits,
            ici: unweighted_ici(&cohorts[i].name, &cohorts[j].name),
        })
        .collect();

    let unweighted_cards: Vec<ModelCard> = cards
        .iter()
        .filter(|c| c.training.weighting_kind == WeightKind::None)
        .cloned()
        .collect();
    let mut selection = Vec::new();
    let mut rank1_top2 = 0;
    for target in &cohorts {
        let candidates: Vec<ModelCard> = unweighted_cards
            .iter()
            .filter(|c| c.training.cohort_name != target.name)
            .cloned()
            .collect();
        let ranking = rank_models(&candidates, target, horizon, false)?;
        let icis: Vec<f64> = ranking
            .entries
            .iter()
            .map(|e| unweighted_ici(&e.card.training.cohort_name, &target.name))
            .collect();
        for (rank, (entry, &ici)) in ranking.entries.iter().zip(&icis).enumerate() {
            let ici_rank = 1 + icis.iter().filter(|&&other| other < ici).count();
            if rank == 0 && ici_rank <= 2 {
                rank1_top2 += 1;
            }
            selection.push(SelectionRow {
                target: target.name.clone(),
                train: entry.card.training.cohort_name.clone(),
                distance: entry.distance,
                rank: rank + 1,
                ici,
                ici_rank,
            });
        }
    }

    let none: Vec<&CellResult> = cells.iter().filter(|c| c.weighting == WeightKind::None).collect();
    let weighting_summary = config
        .weightings
        .iter()
        .map(|&kind| {
            let these: Vec<&CellResult> = cells.iter().filter(|c| c.weighting == kind).collect();
            let ici: Vec<f64> = these.iter().map(|c| c.ici).collect();
            let c_index: Vec<f64> = these.iter().map(|c| c.c_index).collect();
            let none_ici: Vec<f64> = none.iter().map(|c| c.ici).collect();
            WeightingSummary {
                weighting: kind,
                median_ici: median(&ici),
                mean_ici: pairwise_sum(&ici) / ici.len() as f64,
                mean_c_index: pairwise_sum(&c_index) / c_index.len() as f64,
                wilcoxon_vs_none: (kind != WeightKind::None)
                    .then(|| wilcoxon_signed_rank(&ici, &none_ici).ok())
                    .flatten(),
            }
        })
        .collect();
    let summary = SuiteSummary {
        seed,
        cells: pairs.len(),
        kl_ici_spearman: spearman(
            &kl_ici.iter().map(|r| r.kl).collect::<Vec<_>>(),
            &kl_ici.iter().map(|r| r.ici).collect::<Vec<_>>(),
        )
        .ok(),
        weighting: weighting_summary,
        distance_ici_spearman: spearman(
            &selection.iter().map(|r| r.distance).collect::<Vec<_>>(),
            &selection.iter().map(|r| r.ici).collect::<Vec<_>>(),
        )
        .ok(),
        rank1_top2,
        targets: cohorts.len(),
    };
    Ok(ExperimentBundle {
        config: config.clone(),
        seed,
        meta,
        cohorts,
        truths,
        cards,
        kl_ici,
        cells,
        selection,
        summary,
    })
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Writes cohorts, ground truth, model cards and result tables under `dir`.
pub fn write_bundle(bundle: &ExperimentBundle, dir: &Path) -> Result<()> {
    for sub in ["cohorts", "truth", "cards"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    write_json(&dir.join("config.json"), &bundle.config)?;
    write_json(&dir.join("meta.json"), &bundle.meta)?;
    for (cohort, truth) in bundle.cohorts.iter().zip(&bundle.truths) {
        save_cohort(cohort, dir.join("cohorts").join(format!("{}.csv", cohort.name)))?;
        #[derive(Serialize)]
        struct TruthRow<'a> {
            id: &'a str,
            true_risk: f64,
            density: f64,
            hidden: u8,
        }
        let rows: Vec<TruthRow> = cohort
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| TruthRow {
                id: &r.id,
                true_risk: truth.risk[i],
                density: truth.density[i],
                hidden: u8::from(truth.hidden[i]),
            })
            .collect();
        write_csv(&dir.join("truth").join(format!("{}.csv", cohort.name)), &rows)?;
    }
    for card in &bundle.cards {
        card.save(dir.join("cards").join(format!(
            "{}_{}.json",
            card.training.cohort_name, card.training.weighting_kind
        )))?;
    }
    write_csv(&dir.join("kl_ici.csv"), &bundle.kl_ici)?;
    write_csv(&dir.join("weighting.csv"), &bundle.cells)?;
    write_csv(&dir.join("selection.csv"), &bundle.selection)?;

    let mut cal = csv::Writer::from_path(dir.join("calibration.csv"))?;
    cal.write_record(["train", "test", "weighting", "predicted", "observed"])?;
    for c in &bundle.cells {
        for (p, o) in &c.curve {
            cal.write_record([&c.train, &c.test, c.weighting.as_str(), &p.to_string(), &o.to_string()])?;
        }
    }
    cal.flush()?;
    let mut dca = csv::Writer::from_path(dir.join("dca.csv"))?;
    dca.write_record(["train", "test", "weighting", "threshold", "nb_model", "nb_treat_all", "nb_treat_none"])?;
    for c in &bundle.cells {
        if let Some(curve) = &c.dca {
            for k in 0..curve.thresholds.len() {
                dca.write_record([
                    c.train.as_str(),
                    &c.test,
                    c.weighting.as_str(),
                    &curve.thresholds[k].to_string(),
                    &curve.nb_model[k].to_string(),
                    &curve.nb_treat_all[k].to_string(),
                    &curve.nb_treat_none[k].to_string(),
                ])?;
            }
        }
    }
    dca.flush()?;
    write_json(&dir.join("summary.json"), &bundle.summary)
}
