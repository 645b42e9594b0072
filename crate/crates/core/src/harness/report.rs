//! Results tables: test H@1 of the validation-selected configuration per
//! model and (initialization, subset) column.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use super::search::ExperimentLedger;
use crate::error::{Error, Result};

/// Row order of the results table.
pub const MODEL_ORDER: [&str; 4] = ["zero-shot", "gcn-align", "rdgcn", "dgmc"];

pub fn display_name(model: &str) -> &str {
    match model {
        "zero-shot" => "Zero Shot",
        "gcn-align" => "GCN-Align",
        "rdgcn" => "RDGCN",
        "dgmc" => "DGMC",
        other => other,
    }
}

/// One result cell: a model's test H@1 on a dataset subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub dataset: String,
    pub subset: String,
    pub init: String,
    pub model: String,
    pub test_hits1: f64,
}

impl ReportEntry {
    pub fn from_ledger(ledger: &ExperimentLedger) -> Result<Self> {
        let metrics = ledger
            .test_metrics()
            .ok_or_else(|| Error::invalid("ledger has no test metrics for its selected trial"))?;
        Ok(Self {
            dataset: ledger.dataset.clone(),
            subset: ledger.subset.clone(),
            init: ledger.init.clone(),
            model: ledger.model.clone(),
            test_hits1: metrics.hits1(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub cells: Vec<Option<f64>>,
    /// Marks the column maximum, once per column.
    pub best: Vec<bool>,
}

/// Results of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub dataset: String,
    /// (initialization, subset) per column.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Tab-separated rendering with percentages to two decimals; column
    /// maxima carry a trailing `*` and missing cells show `-`.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", self.dataset);
        let header = |name: &str, f: fn(&(String, String)) -> &str| {
            let cols: Vec<&str> = self.columns.iter().map(f).collect();
            format!("{name}\t{}\n", cols.join("\t"))
        };
        out += &header("init", |c| &c.0);
        out += &header("subset", |c| &c.1);
        for row in &self.rows {
            out += display_name(&row.model);
            for (cell, best) in row.cells.iter().zip(&row.best) {
                match cell {
                    Some(v) => {
                        let _ = write!(out, "\t{:.2}{}", 100.0 * v, if *best { "*" } else { "" });
                    }
                    None => out += "\t-",
                }
            }
            out.push('\n');
        }
        out
    }
}

fn model_rank(model: &str) -> (usize, &str) {
    let pos = MODEL_ORDER
        .iter()
        .position(|m| *m == model)
        .unwrap_or(MODEL_ORDER.len());
    (pos, model)
}

/// Groups entries into one table per dataset. Datasets and columns are
/// sorted by name; rows follow [`MODEL_ORDER`], other models after it. A
/// repeated (model, column) entry replaces the earlier one.
pub fn report_results(entries: &[ReportEntry]) -> Vec<ReportTable> {
    let mut datasets: Vec<&str> = entries.iter().map(|e| e.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    datasets
        .into_iter()
        .map(|dataset| {
            let mine: Vec<&ReportEntry> = entries.iter().filter(|e| e.dataset == dataset).collect();
            let mut columns: Vec<(String, String)> = mine.iter().map(|e| (e.init.clone(), e.subset.clone())).collect();
            columns.sort();
            columns.dedup();
            let mut models: Vec<&str> = mine.iter().map(|e| e.model.as_str()).collect();
            models.sort_by(|a, b| model_rank(a).cmp(&model_rank(b)));
            models.dedup();
            let mut rows: Vec<ReportRow> = models
                .iter()
                .map(|m| ReportRow {
                    model: (*m).to_owned(),
                    cells: vec![None; columns.len()],
                    best: vec![false; columns.len()],
                })
                .collect();
            for e in &mine {
                let c = columns
                    .iter()
                    .position(|c| c.0 == e.init && c.1 == e.subset)
                    .expect("column collected above");
                let r = models
                    .iter()
                    .position(|m| *m == e.model)
                    .expect("model collected above");
                if rows[r].cells[c].replace(e.test_hits1).is_some() {
                    warn!("duplicate result for {} on {dataset} {} {}", e.model, e.init, e.subset);
                }
            }
            for c in 0..columns.len() {
                let mut best: Option<(usize, f64)> = None;
                for (r, row) in rows.iter().enumerate() {
                    if let Some(v) = row.cells[c] {
                        if best.is_none_or(|(_, b)| v > b) {
                            best = Some((r, v));
                        }
                    }
                }
                if let Some((r, _)) = best {
                    rows[r].best[c] = true;
                }
            }
            ReportTable {
                dataset: dataset.to_owned(),
                columns,
                rows,
            }
        })
        .collect()
}
