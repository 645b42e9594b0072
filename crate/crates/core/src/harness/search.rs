//! Random-search trial execution and the experiment ledger.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::space::{config_from_sample, sample_config, Configuration, SearchModel, SearchSpace};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, RankMetrics};
use crate::graphstore::AlignmentSplit;
use crate::models::{read_checkpoint, write_checkpoint, GraphInput, Model};
use crate::training::{derive_seed, eval_seed, train, TrainConfig, TrainOutcome, TrialRecord};

pub const SELECTION_RULE: &str = "best validation H@1";

const STREAM_SAMPLE: u64 = 16;
const STREAM_TRIAL: u64 = 17;

/// Split metadata shared by every trial of a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub seed: u64,
    pub test_fraction: f64,
    pub train_fraction: f64,
    pub generator: String,
    pub test: usize,
    pub train: usize,
    pub validation: usize,
}

impl SplitInfo {
    pub fn of(split: &AlignmentSplit) -> Self {
        let (test, train, validation) = split.sizes();
        Self {
            seed: split.seed,
            test_fraction: split.test_fraction,
            train_fraction: split.train_fraction,
            generator: split.generator.clone(),
            test,
            train,
            validation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    /// Position in the search, counting aborted trials.
    pub index: usize,
    pub params: Configuration,
    pub record: TrialRecord,
}

impl TrialEntry {
    pub fn validation_hits1(&self) -> f64 {
        self.record.best_validation_hits1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedTrial {
    pub index: usize,
    pub params: Configuration,
    pub error: String,
}

/// All trials of one (dataset, subset, init, model) search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLedger {
    pub dataset: String,
    pub subset: String,
    pub init: String,
    pub model: String,
    pub selection_rule: String,
    pub n_trials: usize,
    pub search_seed: u64,
    pub split: SplitInfo,
    pub trials: Vec<TrialEntry>,
    pub aborted: Vec<AbortedTrial>,
    /// Position in `trials` of the selected trial.
    pub selected: usize,
}

/// Position of the highest validation H@1, first on ties.
pub fn select_best(trials: &[TrialEntry]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in trials.iter().enumerate() {
        let v = t.validation_hits1();
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|b| b.0)
}

impl ExperimentLedger {
    pub fn selected_trial(&self) -> &TrialEntry {
        &self.trials[self.selected]
    }

    /// Test metrics of the selected trial.
    pub fn test_metrics(&self) -> Option<&RankMetrics> {
        self.selected_trial().record.test.as_ref()
    }

    /// Checks the selection rule and that only the selected trial carries
    /// test metrics.
    pub fn validate(&self) -> Result<()> {
        if select_best(&self.trials) != Some(self.selected) {
            return Err(Error::invalid("selected trial is not the first validation maximum"));
        }
        let leaked = self
            .trials
            .iter()
            .enumerate()
            .any(|(i, t)| i != self.selected && t.record.test.is_some());
        if leaked {
            return Err(Error::invalid("a non-selected trial carries test metrics"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ledger: Self = serde_json::from_str(text)?;
        ledger.validate()?;
        Ok(ledger)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Graphs, features and split of one search.
#[derive(Debug, Clone, Copy)]
pub struct SearchInputs<'a> {
    pub left: GraphInput<'a>,
    pub right: GraphInput<'a>,
    pub split: &'a AlignmentSplit,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub dataset: String,
    pub subset: String,
    pub init: String,
    pub n_trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses the global default.
    pub threads: usize,
    /// Settings outside the search space (epochs, patience, margin, ...).
    pub base: TrainConfig,
    /// Where each trial's best checkpoint is written, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

/// A finished search: its ledger and the selected trial's trained model.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub ledger: ExperimentLedger,
    pub model: Model,
}

fn run_trial(
    index: usize,
    inputs: SearchInputs<'_>,
    space: &SearchSpace,
    options: &SearchOptions,
) -> (Configuration, Result<TrainOutcome>) {
    let params = match sample_config(space, derive_seed(options.seed, STREAM_SAMPLE, index as u64)) {
        Ok(p) => p,
        Err(e) => return (Configuration::new(), Err(e)),
    };
    let outcome = (|| {
        let mut config = config_from_sample(space.model, &params, inputs.left.features.ncols(), &options.base)?;
        config.seed = derive_seed(options.seed, STREAM_TRIAL, index as u64);
        let mut outcome = train(inputs.left, inputs.right, inputs.split.training_view(), &config)?;
        if let Some(dir) = &options.checkpoint_dir {
            let path = dir.join(format!("trial-{index:04}.ckpt"));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_checkpoint(std::io::BufWriter::new(file), &outcome.checkpoint)?;
            outcome.record.checkpoint = Some(path.display().to_string());
        }
        Ok(outcome)
    })();
    (params, outcome)
}

/// Runs `n_trials` randomly sampled configurations, selects the trial with
/// the best validation H@1 and evaluates only that trial on the test pairs.
pub fn run_search(inputs: SearchInputs<'_>, space: &SearchSpace, options: &SearchOptions) -> Result<SearchOutcome> {
    space.validate()?;
    if options.n_trials == 0 {
        return Err(Error::invalid("a search needs at least one trial"));
    }
    if let Some(dir) = &options.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        (0..options.n_trials)
            .into_par_iter()
            .map(|i| run_trial(i, inputs, space, options))
            .collect()
    });

    let mut trials = Vec::new();
    let mut models = Vec::new();
    let mut aborted = Vec::new();
    for (index, (params, result)) in results.into_iter().enumerate() {
        match result {
            Ok(outcome) => {
                trials.push(TrialEntry {
                    index,
                    params,
                    record: outcome.record,
                });
                models.push(outcome.model);
            }
            Err(e) => {
                warn!("trial {index} aborted: {e}");
                aborted.push(AbortedTrial {
                    index,
                    params,
                    error: e.to_string(),
                });
            }
        }
    }
    let Some(selected) = select_best(&trials) else {
        let summary = aborted
            .iter()
            .map(|a| format!("trial {}: {}", a.index, a.error))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AllTrialsFailed(options.n_trials, summary));
    };
    let model = models.swap_remove(selected);
    drop(models);
    let chosen = &mut trials[selected];
    let config = &chosen.record.config;
    let test = evaluate_model(
        &model,
        inputs.left,
        inputs.right,
        inputs.split.test(),
        config.similarity,
        eval_seed(config),
        config.candidates,
    )?;
    info!(
        "selected trial {} with validation H@1 {:.4}; test H@1 {:.4}",
        chosen.index,
        chosen.validation_hits1(),
        test.hits1()
    );
    chosen.record.test = Some(test);
    let ledger = ExperimentLedger {
        dataset: options.dataset.clone(),
        subset: options.subset.clone(),
        init: options.init.clone(),
        model: space.model.name().to_owned(),
        selection_rule: SELECTION_RULE.to_owned(),
        n_trials: options.n_trials,
        search_seed: options.seed,
        split: SplitInfo::of(inputs.split),
        trials,
        aborted,
        selected,
    };
    Ok(SearchOutcome { ledger, model })
}

/// Rebuilds the trained model of a trial from its checkpoint, or by
/// retraining with the recorded configuration when none was written.
pub fn rebuild_trial_model(entry: &TrialEntry, inputs: SearchInputs<'_>) -> Result<Model> {
    let config = &entry.record.config;
    match &entry.record.checkpoint {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let checkpoint = read_checkpoint(std::io::BufReader::new(file))?;
            let mut model = Model::new(&config.model, inputs.left.features, inputs.right.features, 0)?;
            checkpoint.restore(&mut model)?;
            Ok(model)
        }
        None => Ok(train(inputs.left, inputs.right, inputs.split.training_view(), config)?.model),
    }
}

/// Test metrics of one trial, computed on demand.
pub fn trial_test_metrics(entry: &TrialEntry, inputs: SearchInputs<'_>) -> Result<RankMetrics> {
    let model = rebuild_trial_model(entry, inputs)?;
    let config = &entry.record.config;
    evaluate_model(
        &model,
        inputs.left,
        inputs.right,
        inputs.split.test(),
        config.similarity,
        eval_seed(config),
        config.candidates,
    )
}

impl SearchModel {
    /// Model of a ledger's `model` field.
    pub fn of_ledger(ledger: &ExperimentLedger) -> Result<Self> {
        SearchModel::parse(&ledger.model)
    }
}
