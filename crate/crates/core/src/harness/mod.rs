//! Experiment orchestration: search spaces, random search with
//! validation-only selection, ablation and results tables.

mod ablation;
mod layout;
mod report;
mod search;
mod space;

pub use ablation::{ablation_report, AblationRow, AblationTable};
pub use layout::ExperimentDir;
pub use report::{display_name, report_results, ReportEntry, ReportRow, ReportTable, MODEL_ORDER};
pub use search::{
    rebuild_trial_model, run_search, select_best, trial_test_metrics, AbortedTrial, ExperimentLedger, SearchInputs,
    SearchOptions, SearchOutcome, SplitInfo, TrialEntry, SELECTION_RULE,
};
pub use space::{
    config_from_sample, sample_config, Configuration, ParamKind, ParamSpec, ParamValue, SearchModel, SearchSpace,
};
