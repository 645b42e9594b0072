//! Dataset manifests: a TOML file naming the files of one graph pair.
//!
//! ```toml
//! dataset = "openea"
//! subset = "d-w"
//! alignments = "ent_links"
//! test_alignments = "721_5fold/1/test_links"   # optional
//! name_attributes = ["http://www.wikidata.org/entity/P373"]
//!
//! [left]
//! name = "d"
//! triples = "rel_triples_1"
//! attributes = "attr_triples_1"                # optional
//! embeddings = { sun = "init/sun_1.txt" }
//!
//! [right]
//! name = "w"
//! triples = "rel_triples_2"
//! embeddings = { sun = "init/sun_2.txt" }
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::audit::{audit_labels, parse_attribute_triples, LabelAuditReport};
use super::graph::{parse_alignments, parse_triples, GraphPair, KnowledgeGraph};
use super::init::{load_embeddings, EmbeddingTable};
use super::split::{make_split, split_with_test, AlignmentSplit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideManifest {
    pub name: String,
    pub triples: PathBuf,
    #[serde(default)]
    pub attributes: Option<PathBuf>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset: String,
    pub subset: String,
    pub alignments: PathBuf,
    #[serde(default)]
    pub test_alignments: Option<PathBuf>,
    #[serde(default)]
    pub name_attributes: Vec<String>,
    pub left: SideManifest,
    pub right: SideManifest,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

impl DatasetManifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: DatasetManifest = toml::from_str(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn side(&self, left: bool) -> &SideManifest {
        if left {
            &self.left
        } else {
            &self.right
        }
    }
}

/// A loaded graph pair together with its manifest.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub pair: GraphPair,
    pub test_alignments: Option<Vec<(usize, usize)>>,
}

impl Dataset {
    pub fn load(manifest: DatasetManifest) -> Result<Self> {
        let read_graph = |side: &SideManifest| -> Result<KnowledgeGraph> {
            let p = manifest.resolve(&side.triples);
            parse_triples(open(&p)?, &p.display().to_string())
        };
        let left = read_graph(&manifest.left)?;
        let right = read_graph(&manifest.right)?;
        let read_links = |p: &Path| -> Result<Vec<(usize, usize)>> {
            let p = manifest.resolve(p);
            parse_alignments(open(&p)?, &p.display().to_string(), &left, &right)
        };
        let alignments = read_links(&manifest.alignments)?;
        let test_alignments = manifest.test_alignments.as_deref().map(read_links).transpose()?;
        let pair = GraphPair::new(left, right, alignments)?;
        Ok(Self {
            manifest,
            pair,
            test_alignments,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::load(DatasetManifest::from_path(path)?)
    }

    /// Split with the predefined test set when the manifest names one.
    pub fn split(&self, test_fraction: f64, train_fraction: f64, seed: u64) -> Result<AlignmentSplit> {
        match &self.test_alignments {
            Some(test) => split_with_test(&self.pair.alignments, test, train_fraction, seed),
            None => make_split(&self.pair.alignments, test_fraction, train_fraction, seed),
        }
    }

    pub fn init_names(&self) -> Vec<String> {
        self.manifest.left.embeddings.keys().cloned().collect()
    }

    /// Loads the named initialization for both sides.
    pub fn embeddings(&self, init: &str, unit_normalize: bool) -> Result<(EmbeddingTable, EmbeddingTable)> {
        let load = |left: bool| -> Result<EmbeddingTable> {
            let side = self.manifest.side(left);
            let p = side
                .embeddings
                .get(init)
                .ok_or_else(|| Error::invalid(format!("no `{init}` embeddings for side `{}`", side.name)))?;
            let p = self.manifest.resolve(p);
            let kg = if left { &self.pair.left } else { &self.pair.right };
            load_embeddings(open(&p)?, &p.display().to_string(), kg, unit_normalize)
        };
        Ok((load(true)?, load(false)?))
    }

    pub fn audit(&self) -> Result<LabelAuditReport> {
        let audit_side = |left: bool| -> Result<_> {
            let side = self.manifest.side(left);
            let kg = if left { &self.pair.left } else { &self.pair.right };
            let attrs = match &side.attributes {
                Some(p) => {
                    let p = self.manifest.resolve(p);
                    parse_attribute_triples(open(&p)?, &p.display().to_string())?
                }
                None => Vec::new(),
            };
            Ok(audit_labels(kg, &attrs, &self.manifest.name_attributes))
        };
        Ok(LabelAuditReport {
            left: audit_side(true)?,
            right: audit_side(false)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        std::fs::write(d.join("t1"), "a\tr\tb\nb\tr\tc\n").unwrap();
        std::fs::write(d.join("t2"), "x\ts\ty\ny\ts\tz\n").unwrap();
        std::fs::write(d.join("links"), "a\tx\nb\ty\nc\tz\n").unwrap();
        std::fs::write(d.join("attr1"), "a\tname\talpha\n").unwrap();
        std::fs::write(d.join("e1"), "3 1\na 1\nb 2\nc 3\n").unwrap();
        std::fs::write(d.join("e2"), "3 1\nx 1\ny 2\nz 3\n").unwrap();
        std::fs::write(
            d.join("m.toml"),
            r#"
dataset = "toy"
subset = "a-b"
alignments = "links"
name_attributes = ["name"]
[left]
name = "a"
triples = "t1"
attributes = "attr1"
embeddings = { plain = "e1" }
[right]
name = "b"
triples = "t2"
embeddings = { plain = "e2" }
"#,
        )
        .unwrap();
        let ds = Dataset::from_path(d.join("m.toml")).unwrap();
        assert_eq!(ds.pair.alignments.len(), 3);
        let (l, r) = ds.embeddings("plain", false).unwrap();
        assert_eq!(l.rows(), 3);
        assert_eq!(r.matrix[[2, 0]], 3.0);
        assert!(ds.embeddings("missing", false).is_err());
        let audit = ds.audit().unwrap();
        assert_eq!(audit.left.via_attribute, 1);
        assert_eq!(audit.right.via_id, 3);
        assert_eq!(ds.split(0.7, 0.8, 1).unwrap().sizes(), (2, 0, 1));
    }
}
