//! Figures and per-figure tables from a suite bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cohortshift_core::simulator::{CellResult, KlIciRow, SelectionRow, REQUIRED_TABLES};
use cohortshift_core::WeightKind;

use crate::manifest::Inputs;
use crate::svg::{self, Panel, Series};

fn read_rows<T: DeserializeOwned>(inputs: &mut Inputs, path: &Path) -> Result<Vec<T>> {
    let bytes = inputs.read(path)?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("cli: malformed table {}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CurveRow {
    train: String,
    test: String,
    weighting: WeightKind,
    #[serde(flatten)]
    values: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct MeanRow<'a> {
    train: &'a str,
    weighting: WeightKind,
    value: f64,
}

/// Per-training-cohort means of a cell metric for each weighting.
fn weighting_means(cells: &[CellResult], metric: impl Fn(&CellResult) -> f64) -> Vec<MeanRow<'_>> {
    let mut out: Vec<MeanRow> = Vec::new();
    for cell in cells {
        if out.iter().any(|r| r.train == cell.train && r.weighting == cell.weighting) {
            continue;
        }
        let group: Vec<f64> = cells
            .iter()
            .filter(|c| c.train == cell.train && c.weighting == cell.weighting)
            .map(&metric)
            .collect();
        out.push(MeanRow {
            train: &cell.train,
            weighting: cell.weighting,
            value: group.iter().sum::<f64>() / group.len() as f64,
        });
    }
    out
}

fn panels_by<'a>(rows: &'a [MeanRow<'a>]) -> Vec<Panel> {
    let mut panels: Vec<Panel> = Vec::new();
    for row in rows {
        let bar = (row.weighting.to_string(), row.value);
        match panels.iter_mut().find(|p| p.title == row.train) {
            Some(p) => p.bars.push(bar),
            None => panels.push(Panel {
                title: row.train.to_string(),
                bars: vec![bar],
            }),
        }
    }
    panels
}

fn ordered_unique<'a>(values: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

pub fn render(bundle: &Path, out: &Path, inputs: &mut Inputs) -> Result<()> {
    let missing: Vec<&str> = REQUIRED_TABLES
        .iter()
        .copied()
        .filter(|t| !bundle.join(t).is_file())
        .collect();
    if !missing.is_empty() {
        bail!("cli: incomplete bundle {}, missing: {}", bundle.display(), missing.join(", "));
    }
    fs::create_dir_all(out)?;

    let kl: Vec<KlIciRow> = read_rows(inputs, &bundle.join("kl_ici.csv"))?;
    let cells: Vec<CellResult> = read_rows(inputs, &bundle.join("weighting.csv"))?;
    let selection: Vec<SelectionRow> = read_rows(inputs, &bundle.join("selection.csv"))?;
    let calibration: Vec<CurveRow> = read_rows(inputs, &bundle.join("calibration.csv"))?;
    let dca: Vec<CurveRow> = read_rows(inputs, &bundle.join("dca.csv"))?;
    inputs.read(&bundle.join("summary.json"))?;

    // KL against ICI: one panel per training cohort, test cohorts ordered by KL.
    #[derive(Serialize)]
    struct KlRow<'a> {
        kl: f64,
        ici: f64,
        train: &'a str,
        test: &'a str,
    }
    let kl_rows: Vec<KlRow> = kl
        .iter()
        .map(|r| KlRow {
            kl: r.kl,
            ici: r.ici,
            train: &r.train,
            test: &r.test,
        })
        .collect();
    write_rows(&out.join("fig_kl_ici.csv"), &kl_rows)?;
    let trains = ordered_unique(kl.iter().map(|r| r.train.as_str()));
    let panels: Vec<Panel> = trains
        .iter()
        .map(|&train| {
            let mut rows: Vec<&KlIciRow> = kl.iter().filter(|r| r.train == train).collect();
            rows.sort_by(|a, b| a.kl.total_cmp(&b.kl));
            Panel {
                title: format!("train {train}"),
                bars: rows.iter().map(|r| (format!("{} ({:.2})", r.test, r.kl), r.ici)).collect(),
            }
        })
        .collect();
    fs::write(
        out.join("fig_kl_ici.svg"),
        svg::bar_panels("External ICI by test cohort, ordered by KL (in parentheses)", "ICI", &panels),
    )?;
    fs::write(
        out.join("fig_kl_ici_scatter.svg"),
        svg::scatter(
            "KL divergence against external ICI",
            "KL(train || test)",
            "ICI",
            &kl.iter().map(|r| (r.kl, r.ici)).collect::<Vec<_>>(),
        ),
    )?;

    // Weighting comparison.
    let ici_means = weighting_means(&cells, |c| c.ici);
    write_rows(&out.join("fig_ici_weighting.csv"), &ici_means)?;
    fs::write(
        out.join("fig_ici_weighting.svg"),
        svg::bar_panels("Mean external ICI by weighting", "ICI", &panels_by(&ici_means)),
    )?;
    let c_means = weighting_means(&cells, |c| c.c_index);
    write_rows(&out.join("fig_c_weighting.csv"), &c_means)?;
    fs::write(
        out.join("fig_c_weighting.svg"),
        svg::bar_panels("Mean external C-index by weighting", "C-index", &panels_by(&c_means)),
    )?;

    // Selection: one panel per target, candidates ordered by distance.
    write_rows(&out.join("fig_distance_ici.csv"), &selection)?;
    let targets = ordered_unique(selection.iter().map(|r| r.target.as_str()));
    let panels: Vec<Panel> = targets
        .iter()
        .map(|&target| {
            let mut rows: Vec<&SelectionRow> = selection.iter().filter(|r| r.target == target).collect();
            rows.sort_by_key(|r| r.rank);
            Panel {
                title: format!("target {target}"),
                bars: rows.iter().map(|r| (format!("{} ({:.3})", r.train, r.distance), r.ici)).collect(),
            }
        })
        .collect();
    fs::write(
        out.join("fig_distance_ici.svg"),
        svg::bar_panels("Target ICI by candidate model, ordered by distance (in parentheses)", "ICI", &panels),
    )?;

    // Calibration and decision curves of the unweighted models.
    let unweighted = |rows: Vec<CurveRow>| -> Vec<CurveRow> {
        rows.into_iter().filter(|r| r.weighting == WeightKind::None).collect()
    };
    let calibration = unweighted(calibration);
    let dca = unweighted(dca);
    write_flat(&out.join("fig_calibration.csv"), &calibration, &["predicted", "observed"])?;
    write_flat(
        &out.join("fig_dca.csv"),
        &dca,
        &["threshold", "nb_model", "nb_treat_all", "nb_treat_none"],
    )?;
    for &train in &trains {
        let tests = ordered_unique(calibration.iter().filter(|r| r.train == train).map(|r| r.test.as_str()));
        let curve = |rows: &[CurveRow], test: &str, x: &str, y: &str| -> Vec<(f64, f64)> {
            rows.iter()
                .filter(|r| r.train == train && r.test == test)
                .map(|r| (r.values[x], r.values[y]))
                .collect()
        };
        let series: Vec<Series> = tests
            .iter()
            .enumerate()
            .map(|(k, &test)| Series {
                label: test.to_string(),
                points: curve(&calibration, test, "predicted", "observed"),
                dashed: false,
                color: k,
            })
            .collect();
        fs::write(
            out.join(format!("fig_calibration_{train}.svg")),
            svg::line_chart(&format!("Calibration of the {train} model"), "predicted risk", "observed risk", &series, true),
        )?;
        let mut series: Vec<Series> = Vec::new();
        for (k, &test) in tests.iter().enumerate() {
            series.push(Series {
                label: format!("{test} model"),
                points: curve(&dca, test, "threshold", "nb_model"),
                dashed: false,
                color: k,
            });
            series.push(Series {
                label: format!("{test} treat all"),
                points: curve(&dca, test, "threshold", "nb_treat_all")
                    .into_iter()
                    .filter(|p| p.1 >= -0.1)
                    .collect(),
                dashed: true,
                color: k,
            });
        }
        fs::write(
            out.join(format!("fig_dca_{train}.svg")),
            svg::line_chart(
                &format!("Decision curves of the {train} model"),
                "threshold probability",
                "net benefit",
                &series,
                false,
            ),
        )?;
    }
    Ok(())
}

fn write_flat(path: &Path, rows: &[CurveRow], columns: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["train", "test"];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![r.train.clone(), r.test.clone()];
        for c in columns {
            let v = r.values.get(*c).with_context(|| format!("cli: curve table lacks `{c}`"))?;
            record.push(v.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
