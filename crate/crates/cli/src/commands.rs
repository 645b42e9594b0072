use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;

use kgalign_core::evaluation::{evaluate_embeddings, evaluate_model, metrics_table, CandidateSet, MetricsRow};
use kgalign_core::graphstore::{dataset_stats, AlignmentSplit, Dataset, EmbeddingTable, GraphIndexes};
use kgalign_core::harness::{
    ablation_report, report_results, run_search, trial_test_metrics, ExperimentDir, ExperimentLedger, ReportEntry,
    SearchInputs, SearchModel, SearchOptions, SearchSpace, SplitInfo,
};
use kgalign_core::models::{
    write_checkpoint, DgmcConfig, GcnAlignConfig, GraphInput, ModelConfig, RdgcnConfig, SimilarityKind,
};
use kgalign_core::training::{eval_seed, train, TrainConfig};

use crate::{BudgetArgs, Command, DataArgs, SplitArgs};

/// File holding a zero-shot result inside an experiment directory.
const RESULT_FILE: &str = "result.json";

pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Stats { datasets } => stats(&datasets),
        Command::Audit { datasets } => audit(&datasets),
        Command::Split { dataset, split, out } => split_cmd(&dataset, &split, out.as_deref()),
        Command::ZeroShot { data, similarity, out } => zero_shot(&data, &similarity, out.as_deref()),
        Command::Train {
            data,
            model,
            config,
            budget,
            learning_rate,
            similarity,
            checkpoint,
            evaluate_test,
        } => {
            let loaded = Loaded::new(&data)?;
            let mut config = match config {
                Some(path) => read_json::<TrainConfig>(&path)?,
                None => TrainConfig::new(default_model(&model, loaded.dim())?),
            };
            config.max_epochs = budget.epochs;
            config.patience = budget.patience;
            config.seed = budget.seed;
            if let Some(lr) = learning_rate {
                config.learning_rate = lr;
            }
            if let Some(s) = similarity {
                config.similarity = s.parse()?;
            }
            train_cmd(&loaded, &config, checkpoint.as_deref(), evaluate_test)
        }
        Command::Search {
            data,
            model,
            trials,
            threads,
            budget,
            out,
        } => search(&data, &model, trials, threads, &budget, &out),
        Command::Ablate {
            ledger,
            parameter,
            dataset,
            split,
        } => ablate(&ledger, &parameter, &dataset, split.as_deref()),
        Command::Report { roots } => report(&roots),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_path(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn stats(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::from("dataset\tsubset\tgraph\t|E|\t|R|\t|T|\t|A|\t|X|\n");
    for path in paths {
        let ds = load_dataset(path)?;
        let s = dataset_stats(&ds.pair);
        let m = &ds.manifest;
        for (name, side) in [(&m.left.name, s.left), (&m.right.name, s.right)] {
            writeln!(
                out,
                "{}\t{}\t{name}\t{}\t{}\t{}\t{}\t{}",
                m.dataset, m.subset, side.entities, side.relations, side.triples, side.aligned, side.exclusive
            )?;
        }
    }
    Ok(out)
}

fn audit(paths: &[PathBuf]) -> Result<String> {
    let mut out = String::from("subset\tside\tvia attribute\tvia id\tvia id (%)\n");
    for path in paths {
        let ds = load_dataset(path)?;
        let report = ds.audit()?;
        let m = &ds.manifest;
        for (name, side) in [(&m.left.name, &report.left), (&m.right.name, &report.right)] {
            writeln!(
                out,
                "{}\t{name}\t{}\t{}\t{:.2}",
                m.subset,
                side.via_attribute,
                side.via_id,
                side.via_id_percent()
            )?;
        }
    }
    Ok(out)
}

fn make_split(ds: &Dataset, args: &SplitArgs) -> Result<AlignmentSplit> {
    match &args.split {
        Some(path) => {
            let split: AlignmentSplit = read_json(path)?;
            check_split(ds, &split).with_context(|| format!("split {}", path.display()))?;
            Ok(split)
        }
        None => Ok(ds.split(args.test_fraction, args.train_fraction, args.split_seed)?),
    }
}

/// A split read from disk must partition alignments of this dataset.
fn check_split(ds: &Dataset, split: &AlignmentSplit) -> Result<()> {
    let known: HashSet<_> = ds.pair.alignments.iter().collect();
    let mut seen = HashSet::new();
    let parts = [split.train(), split.validation(), split.test()];
    for pair in parts.into_iter().flatten() {
        ensure!(known.contains(pair), "pair {pair:?} is not an alignment of the dataset");
        ensure!(seen.insert(pair), "pair {pair:?} occurs twice");
    }
    Ok(())
}

fn split_cmd(dataset: &Path, args: &SplitArgs, out: Option<&Path>) -> Result<String> {
    let ds = load_dataset(dataset)?;
    let split = make_split(&ds, args)?;
    if let Some(path) = out {
        write_json(path, &split)?;
    }
    let (test, train, validation) = split.sizes();
    Ok(format!("test\ttrain\tvalidation\n{test}\t{train}\t{validation}\n"))
}

/// Dataset, features, indexes and split of one experiment.
struct Loaded {
    dataset: Dataset,
    init: String,
    left: EmbeddingTable,
    right: EmbeddingTable,
    left_graph: GraphIndexes,
    right_graph: GraphIndexes,
    split: AlignmentSplit,
}

impl Loaded {
    fn new(args: &DataArgs) -> Result<Self> {
        let dataset = load_dataset(&args.dataset)?;
        let (left, right) = dataset.embeddings(&args.init, false)?;
        ensure!(
            left.dim() == right.dim(),
            "initializations have different widths ({} vs {})",
            left.dim(),
            right.dim()
        );
        for warning in left.warnings.iter().chain(&right.warnings) {
            log::warn!("{warning}");
        }
        let split = make_split(&dataset, &args.split)?;
        Ok(Self {
            left_graph: GraphIndexes::build(&dataset.pair.left),
            right_graph: GraphIndexes::build(&dataset.pair.right),
            dataset,
            init: args.init.clone(),
            left,
            right,
            split,
        })
    }

    fn dim(&self) -> usize {
        self.left.dim()
    }

    fn inputs(&self) -> Result<SearchInputs<'_>> {
        Ok(SearchInputs {
            left: GraphInput::new(&self.left.matrix, &self.left_graph)?,
            right: GraphInput::new(&self.right.matrix, &self.right_graph)?,
            split: &self.split,
        })
    }

    fn row(&self, model: &str, metrics: kgalign_core::evaluation::RankMetrics) -> MetricsRow {
        MetricsRow {
            dataset: self.dataset.manifest.dataset.clone(),
            subset: self.dataset.manifest.subset.clone(),
            model: model.to_owned(),
            init: self.init.clone(),
            metrics,
        }
    }

    fn experiment_dir(&self, root: &Path, model: &str) -> ExperimentDir {
        let m = &self.dataset.manifest;
        ExperimentDir::new(root, &m.dataset, &m.subset, &self.init, model)
    }
}

fn default_model(name: &str, dim: usize) -> Result<ModelConfig> {
    Ok(match name {
        "rdgcn" => ModelConfig::Rdgcn(RdgcnConfig::new(dim)),
        "gcn-align" => ModelConfig::GcnAlign(GcnAlignConfig::new(dim)),
        "dgmc" => ModelConfig::Dgmc(DgmcConfig::new(dim)),
        other => bail!("unknown model `{other}` (expected rdgcn, gcn-align or dgmc)"),
    })
}

fn zero_shot(args: &DataArgs, similarity: &str, out: Option<&Path>) -> Result<String> {
    let kind: SimilarityKind = similarity.parse()?;
    let loaded = Loaded::new(args)?;
    let metrics = evaluate_embeddings(
        &loaded.left.matrix,
        &loaded.right.matrix,
        loaded.split.test(),
        kind,
        CandidateSet::All,
    )?;
    let row = loaded.row("zero-shot", metrics);
    if let Some(root) = out {
        let dir = loaded.experiment_dir(root, "zero-shot");
        dir.create()?;
        let entry = ReportEntry {
            dataset: row.dataset.clone(),
            subset: row.subset.clone(),
            init: row.init.clone(),
            model: row.model.clone(),
            test_hits1: row.metrics.hits1(),
        };
        write_json(&dir.root.join(RESULT_FILE), &entry)?;
    }
    Ok(metrics_table(&[row]))
}

fn train_cmd(loaded: &Loaded, config: &TrainConfig, checkpoint: Option<&Path>, evaluate_test: bool) -> Result<String> {
    let inputs = loaded.inputs()?;
    let outcome = train(inputs.left, inputs.right, loaded.split.training_view(), config)?;
    if let Some(path) = checkpoint {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_checkpoint(std::io::BufWriter::new(file), &outcome.checkpoint)?;
    }
    let record = &outcome.record;
    let mut out = String::from("epoch\tloss\tvalidation H@1\n");
    for (e, (loss, h1)) in record.loss_history.iter().zip(&record.history).enumerate() {
        writeln!(out, "{}\t{loss:.6}\t{:.2}", e + 1, 100.0 * h1)?;
    }
    out.push('\n');
    let name = config.model.name();
    let mut rows = vec![loaded.row(&format!("{name} (validation)"), record.best_validation.clone())];
    if evaluate_test {
        let test = evaluate_model(
            &outcome.model,
            inputs.left,
            inputs.right,
            loaded.split.test(),
            config.similarity,
            eval_seed(config),
            config.candidates,
        )?;
        rows.push(loaded.row(&format!("{name} (test)"), test));
    }
    out += &metrics_table(&rows);
    Ok(out)
}

fn search(
    args: &DataArgs,
    model: &str,
    trials: usize,
    threads: usize,
    budget: &BudgetArgs,
    root: &Path,
) -> Result<String> {
    let search_model = SearchModel::parse(model)?;
    let loaded = Loaded::new(args)?;
    let dir = loaded.experiment_dir(root, model);
    dir.create()?;
    let space = SearchSpace::for_model(search_model, loaded.dim());
    let mut base = TrainConfig::new(default_model(model, loaded.dim())?);
    base.max_epochs = budget.epochs;
    base.patience = budget.patience;
    let options = SearchOptions {
        dataset: loaded.dataset.manifest.dataset.clone(),
        subset: loaded.dataset.manifest.subset.clone(),
        init: loaded.init.clone(),
        n_trials: trials,
        seed: budget.seed,
        threads,
        base,
        checkpoint_dir: Some(dir.checkpoints()),
    };
    write_json(&dir.config(), &space)?;
    let outcome = run_search(loaded.inputs()?, &space, &options)?;
    let ledger = &outcome.ledger;
    ledger.save(dir.ledger())?;
    info!("ledger written to {}", dir.ledger().display());

    let mut out = String::from("trial\tvalidation H@1\tbest epoch\tepochs\tselected\n");
    for (pos, t) in ledger.trials.iter().enumerate() {
        writeln!(
            out,
            "{}\t{:.2}\t{}\t{}\t{}",
            t.index,
            100.0 * t.validation_hits1(),
            t.record.best_epoch,
            t.record.history.len(),
            if pos == ledger.selected { "yes" } else { "no" }
        )?;
    }
    for a in &ledger.aborted {
        writeln!(out, "{}\taborted\t-\t-\tno", a.index)?;
    }
    fs::write(dir.tables().join("trials.tsv"), &out)?;
    out.push('\n');
    let test = ledger.test_metrics().expect("selected trial is tested").clone();
    out += &metrics_table(&[loaded.row(model, test)]);
    Ok(out)
}

fn ablate(ledger_path: &Path, parameters: &[String], dataset: &Path, split: Option<&Path>) -> Result<String> {
    let ledger = ExperimentLedger::load(ledger_path)?;
    let info = &ledger.split;
    let args = DataArgs {
        dataset: dataset.to_path_buf(),
        init: ledger.init.clone(),
        split: SplitArgs {
            split_seed: info.seed,
            test_fraction: info.test_fraction,
            train_fraction: info.train_fraction,
            split: split.map(Path::to_path_buf),
        },
    };
    let loaded = Loaded::new(&args)?;
    let m = &loaded.dataset.manifest;
    ensure!(
        m.dataset == ledger.dataset && m.subset == ledger.subset,
        "ledger belongs to {} {}, not {} {}",
        ledger.dataset,
        ledger.subset,
        m.dataset,
        m.subset
    );
    ensure!(
        SplitInfo::of(&loaded.split) == *info,
        "the rebuilt split differs from the ledger's split"
    );
    let inputs = loaded.inputs()?;
    let mut out = String::new();
    for (i, parameter) in parameters.iter().enumerate() {
        let table = ablation_report(&ledger, parameter, |t| Ok(trial_test_metrics(t, inputs)?.hits1()))?;
        if i > 0 {
            out.push('\n');
        }
        out += &table.to_tsv();
    }
    Ok(out)
}

fn collect_results(dir: &Path, entries: &mut Vec<ReportEntry>) -> Result<()> {
    let mut children: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    children.sort();
    for path in children {
        if path.is_dir() {
            collect_results(&path, entries)?;
        } else if path.file_name().is_some_and(|n| n == "ledger.json") {
            let ledger = ExperimentLedger::load(&path)?;
            entries.push(ReportEntry::from_ledger(&ledger)?);
        } else if path.file_name().is_some_and(|n| n == RESULT_FILE) {
            entries.push(read_json(&path)?);
        }
    }
    Ok(())
}

fn report(roots: &[PathBuf]) -> Result<String> {
    let mut entries = Vec::new();
    for root in roots {
        collect_results(root, &mut entries)?;
    }
    ensure!(!entries.is_empty(), "no results found");
    let tables = report_results(&entries);
    Ok(tables.iter().map(|t| t.to_tsv()).collect::<Vec<_>>().join("\n"))
}
