//! On-disk layout of experiments: one directory per
//! (dataset, subset, init, model).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentDir {
    pub root: PathBuf,
}

/// Keeps a name usable as a single path component.
fn component(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    match cleaned.as_str() {
        "" | "." | ".." => "_".to_owned(),
        _ => cleaned,
    }
}

impl ExperimentDir {
    pub fn new(base: impl AsRef<Path>, dataset: &str, subset: &str, init: &str, model: &str) -> Self {
        let root = [dataset, subset, init, model]
            .iter()
            .fold(base.as_ref().to_path_buf(), |p, c| p.join(component(c)));
        Self { root }
    }

    /// Creates the directory and its `checkpoints` and `tables` children.
    pub fn create(&self) -> Result<()> {
        for dir in [self.root.clone(), self.checkpoints(), self.tables()] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.json")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn tables(&self) -> PathBuf {
        self.root.join("tables")
    }
}
