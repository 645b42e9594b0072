//! Per-parameter ablation: the best trial for each fixed value.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::search::{ExperimentLedger, TrialEntry};
use super::space::ParamValue;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: ParamValue,
    /// Search index of the winning trial.
    pub trial: usize,
    pub validation_hits1: f64,
    pub test_hits1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub parameter: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Tab-separated table with percentages to two decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\tvalidation H@1\ttest H@1\ttrial\n", self.parameter);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.2}\t{:.2}\t{}",
                r.value,
                100.0 * r.validation_hits1,
                100.0 * r.test_hits1,
                r.trial
            );
        }
        out
    }
}

/// For every observed value of `parameter`, picks the trial with the best
/// validation H@1 among the trials using that value (first on ties) and
/// reports its validation and test H@1.
///
/// Selection reads validation metrics only. Test H@1 of a winner comes from
/// the ledger for the globally selected trial and from `test_hits1`
/// otherwise, which is called once per winner after selection.
pub fn ablation_report<F>(ledger: &ExperimentLedger, parameter: &str, mut test_hits1: F) -> Result<AblationTable>
where
    F: FnMut(&TrialEntry) -> Result<f64>,
{
    if ledger.trials.is_empty() {
        return Err(Error::invalid("ledger has no completed trials"));
    }
    let mut groups: Vec<(ParamValue, usize)> = Vec::new();
    for (pos, t) in ledger.trials.iter().enumerate() {
        let Some(value) = t.params.get(parameter) else {
            return Err(if ledger.trials.iter().all(|t| !t.params.contains_key(parameter)) {
                Error::UnknownParameter(parameter.to_owned())
            } else {
                Error::invalid(format!("trial {} does not set `{parameter}`", t.index))
            });
        };
        match groups.iter_mut().find(|(v, _)| v == value) {
            Some((_, best)) => {
                if t.validation_hits1() > ledger.trials[*best].validation_hits1() {
                    *best = pos;
                }
            }
            None => groups.push((value.clone(), pos)),
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows = groups
        .into_iter()
        .map(|(value, pos)| {
            let t = &ledger.trials[pos];
            let test = match &t.record.test {
                Some(m) => m.hits1(),
                None => test_hits1(t)?,
            };
            Ok(AblationRow {
                value,
                trial: t.index,
                validation_hits1: t.validation_hits1(),
                test_hits1: test,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable {
        parameter: parameter.to_owned(),
        rows,
    })
}
