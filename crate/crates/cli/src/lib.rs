//! `cohortshift` command-line interface.

pub mod manifest;
mod report;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use cohortshift_core::cohort::{parse_meta_summary, read_cohort, save_cohort};
use cohortshift_core::density::kl_divergence;
use cohortshift_core::evaluation::{calibration, decision_curve, default_threshold_grid, NetBenefitCurve};
use cohortshift_core::selection::rank_models;
use cohortshift_core::simulator::{pooled_meta, scenario_suite, simulate_cohort, write_bundle, ExperimentConfig};
use cohortshift_core::{
    derive_horizon_outcomes, harrell_c, Bandwidth, CensoringPolicy, Cohort, CsvSchema, MetaSummary, ModelCard,
    WeightKind, WeightingConfig, DEFAULT_HORIZON,
};

use manifest::{digest_outputs, now, Inputs, RunManifest};
use svg::Series;

#[derive(Debug, Parser, Serialize)]
#[command(name = "cohortshift", version, about = "Survival risk models under cohort shift")]
pub struct Cli {
    /// Prediction horizon in months.
    #[arg(long, global = true, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every available core. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Output directory; commands with a single table print it to stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Generate synthetic cohorts with ground truth.
    Simulate(SimulateArgs),
    /// KL divergence between two cohorts, or a pairwise matrix.
    Kl(KlArgs),
    /// Per-patient importance weights.
    Weights(WeightsArgs),
    /// Fit a (weighted) Cox model and write its model card.
    Train(TrainArgs),
    /// Calibration and discrimination of a model card on a cohort.
    Evaluate(EvaluateArgs),
    /// Rank a registry of model cards for a target cohort.
    Select(SelectArgs),
    /// Decision curve of a model card on a cohort.
    Dca(DcaArgs),
    /// Full pairwise experiment over simulated cohorts.
    Suite(SuiteArgs),
    /// Figures and per-figure tables from a suite bundle.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Five cohorts with graded covariate and outcome shift.
    Graded,
    /// Five cohorts from one population.
    Null,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentSource {
    /// Experiment config JSON; overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "graded")]
    pub preset: Preset,
    /// Patients per cohort for presets.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
}

#[derive(Debug, Args, Serialize)]
pub struct KlArgs {
    #[arg(long, requires = "b", conflicts_with = "matrix")]
    pub a: Option<PathBuf>,
    #[arg(long, requires = "a")]
    pub b: Option<PathBuf>,
    /// Directory of cohort CSVs; emits the full matrix (rows source, columns target).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Fixed KDE bandwidth on standardized coordinates; Scott's rule by default.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightOptions {
    #[arg(long, default_value_t = 8)]
    pub strata: usize,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Meta covariate sample size; max(10 n, 5000) by default.
    #[arg(long)]
    pub n_meta: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long, default_value = "concept")]
    pub weighting: WeightKind,
    #[command(flatten)]
    pub options: WeightOptions,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value = "none")]
    pub weighting: WeightKind,
    #[command(flatten)]
    pub options: WeightOptions,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    /// Directory for calibration and decision-curve CSVs and SVGs.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// Directory of model-card JSON files.
    #[arg(long)]
    pub registry: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Also report each card's observed ICI on the target.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct DcaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    pub emphasis_low: f64,
    #[arg(long, default_value_t = 0.70)]
    pub emphasis_high: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Directory written by `suite`; figures go to --out or `<bundle>/report`.
    #[arg(long)]
    pub bundle: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}")?;
            return Ok(());
        }
        Err(e) => bail!("cli: {e}"),
    };
    if !(cli.horizon > 0.0 && cli.horizon.is_finite()) {
        bail!("cli: --horizon must be a positive number");
    }
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build()?;
    let mut buffer = Vec::new();
    pool.install(|| Session::new(&cli, command_line).dispatch(&mut buffer))?;
    stdout.write_all(&buffer)?;
    Ok(())
}

struct Session<'a> {
    cli: &'a Cli,
    command_line: Vec<String>,
    inputs: Inputs,
    started_at: u64,
}

impl<'a> Session<'a> {
    fn new(cli: &'a Cli, command_line: Vec<String>) -> Self {
        Self {
            cli,
            command_line,
            inputs: Inputs::default(),
            started_at: now(),
        }
    }

    fn dispatch(mut self, stdout: &mut dyn Write) -> Result<()> {
        match &self.cli.command {
            Command::Simulate(a) => self.simulate(a),
            Command::Kl(a) => self.kl(a, stdout),
            Command::Weights(a) => self.weights(a, stdout),
            Command::Train(a) => self.train(a, stdout),
            Command::Evaluate(a) => self.evaluate(a, stdout),
            Command::Select(a) => self.select(a, stdout),
            Command::Dca(a) => self.dca(a, stdout),
            Command::Suite(a) => self.suite(a),
            Command::Report(a) => self.report(a),
        }
    }

    fn horizon(&self) -> f64 {
        self.cli.horizon
    }

    fn out_dir(&self) -> Result<Option<&'a Path>> {
        match &self.cli.out {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("cli: cannot create {}", dir.display()))?;
                Ok(Some(dir.as_path()))
            }
            None => Ok(None),
        }
    }

    fn require_out(&self) -> Result<&'a Path> {
        match self.out_dir()? {
            Some(dir) => Ok(dir),
            None => bail!("cli: this command writes several files and needs --out"),
        }
    }

    fn finish(&self, dir: &Path) -> Result<()> {
        RunManifest {
            tool: "cohortshift".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command_line: self.command_line.clone(),
            config: serde_json::to_value(self.cli)?,
            seed: self.cli.seed,
            workers: self.cli.workers,
            inputs: self.inputs.snapshot(),
            outputs: digest_outputs(dir)?,
            started_at: self.started_at,
            finished_at: now(),
        }
        .write(dir)
    }

    fn cohort(&mut self, path: &Path) -> Result<Cohort> {
        let bytes = self.inputs.read(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "cohort".into());
        read_cohort(bytes.as_slice(), name, &CsvSchema::default())
            .with_context(|| format!("reading {}", path.display()))
    }

    fn meta(&mut self, path: &Path) -> Result<MetaSummary> {
        let text = self.inputs.read_string(path)?;
        parse_meta_summary(&text).with_context(|| format!("reading {}", path.display()))
    }

    fn card(&mut self, path: &Path) -> Result<ModelCard> {
        let text = self.inputs.read_string(path)?;
        ModelCard::from_json(&text).with_context(|| format!("reading {}", path.display()))
    }

    fn experiment(&mut self, source: &ExperimentSource) -> Result<ExperimentConfig> {
        let mut config = match &source.config {
            Some(path) => {
                let text = self.inputs.read_string(path)?;
                serde_json::from_str(&text).with_context(|| format!("cli: invalid experiment config {}", path.display()))?
            }
            None => match source.preset {
                Preset::Graded => ExperimentConfig::graded(source.n),
                Preset::Null => ExperimentConfig::null(source.n),
            },
        };
        if source.config.is_none() || self.cli.horizon != DEFAULT_HORIZON {
            config.horizon = self.cli.horizon;
        }
        Ok(config)
    }

    fn simulate(&mut self, args: &SimulateArgs) -> Result<()> {
        let dir = self.require_out()?;
        let config = self.experiment(&args.source)?;
        config.validate()?;
        let generated = config
            .cohorts
            .par_iter()
            .map(|spec| simulate_cohort(spec, self.cli.seed, config.horizon))
            .collect::<cohortshift_core::Result<Vec<_>>>()?;
        let (cohorts, truths): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
        fs::create_dir_all(dir.join("cohorts"))?;
        fs::create_dir_all(dir.join("truth"))?;
        for (cohort, truth) in cohorts.iter().zip(&truths) {
            save_cohort(cohort, dir.join("cohorts").join(format!("{}.csv", cohort.name)))?;
            let mut w = csv::Writer::from_path(dir.join("truth").join(format!("{}.csv", cohort.name)))?;
            w.write_record(["id", "true_risk", "density", "hidden"])?;
            for (i, r) in cohort.records.iter().enumerate() {
                w.write_record([
                    r.id.clone(),
                    truth.risk[i].to_string(),
                    truth.density[i].to_string(),
                    u8::from(truth.hidden[i]).to_string(),
                ])?;
            }
            w.flush()?;
        }
        let meta = config.meta.clone().map_or_else(|| pooled_meta(&cohorts, &truths), Ok)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;
        self.finish(dir)
    }

    fn kl(&mut self, args: &KlArgs, stdout: &mut dyn Write) -> Result<()> {
        let bandwidth = args.bandwidth.map_or(Bandwidth::Scott, Bandwidth::Fixed);
        let horizon = self.horizon();
        if let Some(dir) = &args.matrix {
            let cohorts = self.cohort_dir(dir)?;
            let samples = cohorts
                .iter()
                .map(|c| derive_horizon_outcomes(c, horizon, CensoringPolicy::ExcludeCensored))
                .collect::<cohortshift_core::Result<Vec<_>>>()?;
            let k = cohorts.len();
            let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
            let values = cells
                .par_iter()
                .map(|&(i, j)| {
                    kl_divergence((&cohorts[i], &samples[i]), (&cohorts[j], &samples[j]), bandwidth).map(|r| r.value)
                })
                .collect::<cohortshift_core::Result<Vec<_>>>()?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["source".to_string()];
            header.extend(cohorts.iter().map(|c| c.name.clone()));
            w.write_record(&header)?;
            for i in 0..k {
                let mut row = vec![cohorts[i].name.clone()];
                row.extend(values[i * k..(i + 1) * k].iter().map(f64::to_string));
                w.write_record(&row)?;
            }
            let table = w.into_inner()?;
            return self.emit(stdout, "kl_matrix.csv", &table);
        }
        let (Some(a), Some(b)) = (&args.a, &args.b) else {
            bail!("cli: kl needs --a and --b, or --matrix");
        };
        let (ca, cb) = (self.cohort(a)?, self.cohort(b)?);
        let sa = derive_horizon_outcomes(&ca, horizon, CensoringPolicy::ExcludeCensored)?;
        let sb = derive_horizon_outcomes(&cb, horizon, CensoringPolicy::ExcludeCensored)?;
        let report = kl_divergence((&ca, &sa), (&cb, &sb), bandwidth)?;
        self.emit(stdout, "kl.json", (serde_json::to_string_pretty(&report)? + "\n").as_bytes())
    }

    fn cohort_dir(&mut self, dir: &Path) -> Result<Vec<Cohort>> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("cli: cannot list {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            bail!("cli: no cohort CSVs in {}", dir.display());
        }
        let cohorts = paths.iter().map(|p| self.cohort(p)).collect::<Result<Vec<_>>>()?;
        cohortshift_core::cohort::check_unique_names(&cohorts)?;
        Ok(cohorts)
    }

    /// Single-table commands print to stdout, or write `name` plus a
    /// manifest when --out is given.
    fn emit(&self, stdout: &mut dyn Write, name: &str, bytes: &[u8]) -> Result<()> {
        match self.out_dir()? {
            Some(dir) => {
                fs::write(dir.join(name), bytes)?;
                self.finish(dir)
            }
            None => Ok(stdout.write_all(bytes)?),
        }
    }

    fn weighting_config(&self, options: &WeightOptions) -> WeightingConfig {
        WeightingConfig {
            strata: options.strata,
            n_meta: options.n_meta,
            bandwidth: options.bandwidth.map_or(Bandwidth::Scott, Bandwidth::Fixed),
            seed: self.cli.seed,
        }
    }

    fn weights(&mut self, args: &WeightsArgs, stdout: &mut dyn Write) -> Result<()> {
        if args.weighting == WeightKind::None {
            bail!("cli: weights needs --weighting concept, covariate or joint");
        }
        let cohort = self.cohort(&args.cohort)?;
        let meta = self.meta(&args.meta)?;
        let config = self.weighting_config(&args.options);
        let set = cohortshift_core::compute_weights(&cohort, &meta, args.weighting, self.horizon(), &config)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "weight"])?;
        for (r, v) in cohort.records.iter().zip(&set.values) {
            w.write_record([r.id.clone(), v.to_string()])?;
        }
        let table = w.into_inner()?;
        match self.out_dir()? {
            Some(dir) => {
                fs::write(dir.join("weights.csv"), table)?;
                #[derive(Serialize)]
                struct ProvenanceFile<'a> {
                    kind: WeightKind,
                    n: usize,
                    provenance: &'a cohortshift_core::weights::Provenance,
                }
                let doc = ProvenanceFile {
                    kind: set.kind,
                    n: set.len(),
                    provenance: &set.provenance,
                };
                fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
                self.finish(dir)
            }
            None => Ok(stdout.write_all(&table)?),
        }
    }

    fn train(&mut self, args: &TrainArgs, stdout: &mut dyn Write) -> Result<()> {
        let cohort = self.cohort(&args.cohort)?;
        let meta = match (&args.meta, args.weighting) {
            (Some(path), _) => Some(self.meta(path)?),
            (None, WeightKind::None) => None,
            (None, kind) => bail!("cli: --meta is required for weighting `{kind}`"),
        };
        let model = match &meta {
            Some(meta) => {
                let config = self.weighting_config(&args.options);
                cohortshift_core::train(&cohort, meta, args.weighting, self.horizon(), &config)?.0
            }
            None => cohortshift_core::fit_cox(&cohort, None)?,
        };
        let card = ModelCard::new(model, &cohort, self.horizon(), args.weighting);
        self.emit(stdout, "card.json", (card.to_json()? + "\n").as_bytes())
    }

    fn evaluate(&mut self, args: &EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
        let card = self.card(&args.model)?;
        let cohort = self.cohort(&args.cohort)?;
        let horizon = self.horizon();
        let sample = derive_horizon_outcomes(&cohort, horizon, CensoringPolicy::ExcludeCensored)?;
        let risks = card.model.predict_cohort(&cohort, horizon)?;
        let preds: Vec<f64> = sample.indices().iter().map(|&i| risks[i]).collect();
        let outcomes = sample.outcomes();
        let cal = calibration(&preds, &outcomes)?;
        let concordance = harrell_c(&risks, &cohort)?;
        #[derive(Serialize)]
        struct Metrics {
            ici: f64,
            c_index: f64,
            n: usize,
            excluded: usize,
        }
        let metrics = Metrics {
            ici: cal.ici,
            c_index: concordance.c_index,
            n: sample.len(),
            excluded: sample.excluded_count,
        };
        if let Some(curves) = &args.curves {
            fs::create_dir_all(curves)?;
            let mut w = csv::Writer::from_path(curves.join("calibration.csv"))?;
            w.write_record(["predicted", "observed"])?;
            for (p, o) in &cal.curve {
                w.write_record([p.to_string(), o.to_string()])?;
            }
            w.flush()?;
            let title = format!("{} on {}", card.training.cohort_name, cohort.name);
            fs::write(
                curves.join("calibration.svg"),
                svg::line_chart(
                    &format!("Calibration: {title}"),
                    "predicted risk",
                    "observed risk",
                    &[Series {
                        label: "model".into(),
                        points: cal.curve.clone(),
                        dashed: false,
                        color: 0,
                    }],
                    true,
                ),
            )?;
            let curve = decision_curve(&preds, &outcomes, &default_threshold_grid(), (0.10, 0.70))?;
            write_dca(curves, &curve, &title)?;
            self.finish(curves)?;
        }
        self.emit(stdout, "metrics.json", (serde_json::to_string_pretty(&metrics)? + "\n").as_bytes())
    }

    fn select(&mut self, args: &SelectArgs, stdout: &mut dyn Write) -> Result<()> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&args.registry)
            .with_context(|| format!("cli: cannot list {}", args.registry.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let cards = paths.iter().map(|p| self.card(p)).collect::<Result<Vec<_>>>()?;
        let target = self.cohort(&args.target)?;
        let ranking = rank_models(&cards, &target, self.horizon(), args.audit)?;
        let table = ranking.to_csv();
        match self.out_dir()? {
            Some(dir) => {
                fs::write(dir.join("ranking.csv"), &table)?;
                #[derive(Serialize)]
                struct Entry<'a> {
                    rank: usize,
                    training_cohort: &'a str,
                    weighting: WeightKind,
                    n_train: usize,
                    km_train: f64,
                    distance: f64,
                    #[serde(skip_serializing_if = "Option::is_none")]
                    observed_ici: Option<f64>,
                }
                #[derive(Serialize)]
                struct Doc<'a> {
                    target_name: &'a str,
                    target_km: f64,
                    horizon: f64,
                    entries: Vec<Entry<'a>>,
                }
                let doc = Doc {
                    target_name: &ranking.target_name,
                    target_km: ranking.target_km,
                    horizon: ranking.horizon,
                    entries: ranking
                        .entries
                        .iter()
                        .enumerate()
                        .map(|(i, e)| Entry {
                            rank: i + 1,
                            training_cohort: &e.card.training.cohort_name,
                            weighting: e.card.training.weighting_kind,
                            n_train: e.card.training.n,
                            km_train: e.card.training.km_at_horizon,
                            distance: e.distance,
                            observed_ici: e.observed_ici,
                        })
                        .collect(),
                };
                fs::write(dir.join("ranking.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
                self.finish(dir)
            }
            None => Ok(stdout.write_all(table.as_bytes())?),
        }
    }

    fn dca(&mut self, args: &DcaArgs, stdout: &mut dyn Write) -> Result<()> {
        let card = self.card(&args.model)?;
        let cohort = self.cohort(&args.cohort)?;
        let horizon = self.horizon();
        let sample = derive_horizon_outcomes(&cohort, horizon, CensoringPolicy::ExcludeCensored)?;
        let risks = card.model.predict_cohort(&cohort, horizon)?;
        let preds: Vec<f64> = sample.indices().iter().map(|&i| risks[i]).collect();
        if !(0.0 < args.emphasis_low && args.emphasis_low < args.emphasis_high && args.emphasis_high < 1.0) {
            bail!("cli: emphasis window must satisfy 0 < low < high < 1");
        }
        let curve = decision_curve(
            &preds,
            &sample.outcomes(),
            &default_threshold_grid(),
            (args.emphasis_low, args.emphasis_high),
        )?;
        match self.out_dir()? {
            Some(dir) => {
                write_dca(dir, &curve, &format!("{} on {}", card.training.cohort_name, cohort.name))?;
                self.finish(dir)
            }
            None => Ok(stdout.write_all(&dca_table(&curve)?)?),
        }
    }

    fn suite(&mut self, args: &SuiteArgs) -> Result<()> {
        let dir = self.require_out()?;
        let config = self.experiment(&args.source)?;
        let bundle = scenario_suite(&config, self.cli.seed)?;
        write_bundle(&bundle, dir)?;
        self.finish(dir)
    }

    fn report(&mut self, args: &ReportArgs) -> Result<()> {
        let dir = match &self.cli.out {
            Some(d) => d.clone(),
            None => args.bundle.join("report"),
        };
        report::render(&args.bundle, &dir, &mut self.inputs)?;
        self.finish(&dir)
    }
}

fn dca_table(curve: &NetBenefitCurve) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "nb_model", "nb_treat_all", "nb_treat_none"])?;
    for k in 0..curve.thresholds.len() {
        w.write_record([
            curve.thresholds[k].to_string(),
            curve.nb_model[k].to_string(),
            curve.nb_treat_all[k].to_string(),
            curve.nb_treat_none[k].to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

fn write_dca(dir: &Path, curve: &NetBenefitCurve, title: &str) -> Result<()> {
    fs::write(dir.join("dca.csv"), dca_table(curve)?)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        prevalence: f64,
        max_net_benefit: f64,
        winning_range: &'a [(f64, f64)],
        emphasis: (f64, f64),
    }
    let summary = Summary {
        prevalence: curve.prevalence,
        max_net_benefit: curve.max_net_benefit,
        winning_range: &curve.winning_range,
        emphasis: curve.emphasis,
    };
    fs::write(dir.join("dca.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    // treat-all falls without bound as the threshold nears 1; keep the plot readable
    let floor = -0.1;
    let series = |label: &str, values: &[f64], color: usize| Series {
        label: label.into(),
        points: curve
            .thresholds
            .iter()
            .copied()
            .zip(values.iter().copied())
            .filter(|p| p.1 >= floor)
            .collect(),
        dashed: color > 0,
        color,
    };
    fs::write(
        dir.join("dca.svg"),
        svg::line_chart(
            &format!("Decision curve: {title}"),
            "threshold probability",
            "net benefit",
            &[
                series("model", &curve.nb_model, 0),
                series("treat all", &curve.nb_treat_all, 1),
                series("treat none", &curve.nb_treat_none, 7),
            ],
            false,
        ),
    )?;
    Ok(())
}
