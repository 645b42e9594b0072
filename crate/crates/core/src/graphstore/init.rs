//! Initial entity features: embedding files and label-based aggregation.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::graph::KnowledgeGraph;
use crate::diffmath::{l2_normalize_rows_values, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowNormalization {
    None,
    UnitL2,
}

/// Initial feature matrix, one row per graph entity.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Matrix,
    pub provenance: String,
    pub normalization: RowNormalization,
    pub warnings: Vec<String>,
}

impl EmbeddingTable {
    pub fn new(matrix: Matrix, provenance: impl Into<String>) -> Result<Self> {
        if let Some((idx, _)) = matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {idx:?}")));
        }
        Ok(Self {
            matrix,
            provenance: provenance.into(),
            normalization: RowNormalization::None,
            warnings: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Rescales rows to unit l2 norm. Zero rows are left as they are and
    /// reported in `warnings`.
    pub fn unit_normalize(&mut self) {
        for (i, row) in self.matrix.rows().into_iter().enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                self.warnings
                    .push(format!("row {i} is the zero vector and was not normalized"));
            }
        }
        self.matrix = l2_normalize_rows_values(&self.matrix);
        self.normalization = RowNormalization::UnitL2;
    }
}

/// Reads an embedding file with a `count dim` header followed by one
/// `entity_id v1 … v_dim` line per entity. Rows are reordered to the graph's
/// entity indexes.
pub fn load_embeddings<R: BufRead>(
    reader: R,
    source: &str,
    kg: &KnowledgeGraph,
    unit_normalize: bool,
) -> Result<EmbeddingTable> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_owned(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) => {
                let l = l.map_err(|e| Error::io(source, e))?;
                if !l.trim().is_empty() {
                    break l;
                }
            }
            None => return Err(Error::EmptyInput(source.to_owned())),
        }
    };
    let head: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match head.as_slice() {
        [c, d] => (
            c.parse::<usize>()
                .map_err(|e| parse_err(1, format!("bad count: {e}")))?,
            d.parse::<usize>()
                .map_err(|e| parse_err(1, format!("bad dimension: {e}")))?,
        ),
        _ => return Err(parse_err(1, "header must be `count dim`".into())),
    };
    if count != kg.num_entities() {
        return Err(Error::invalid(format!(
            "{source}: header declares {count} vectors but the graph has {} entities",
            kg.num_entities()
        )));
    }

    let mut matrix = Matrix::zeros((count, dim));
    let mut filled = vec![false; count];
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().expect("non-empty line");
        let row = kg
            .entity_index(id)
            .ok_or_else(|| parse_err(lineno + 1, format!("unknown entity `{id}`")))?;
        if filled[row] {
            return Err(parse_err(lineno + 1, format!("duplicate vector for `{id}`")));
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| parse_err(lineno + 1, format!("bad value `{f}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(parse_err(
                lineno + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{source}: line {}", lineno + 1)));
        }
        matrix.row_mut(row).assign(&ndarray::ArrayView1::from(&values));
        filled[row] = true;
    }
    if let Some(missing) = filled.iter().position(|f| !f) {
        return Err(Error::invalid(format!(
            "{source}: no vector for entity `{}`",
            kg.entity_id(missing)
        )));
    }

    let mut table = EmbeddingTable::new(matrix, source)?;
    if unit_normalize {
        table.unit_normalize();
    }
    Ok(table)
}

/// Writes a table in the format read by [`load_embeddings`].
pub fn write_embeddings<W: std::io::Write>(mut out: W, kg: &KnowledgeGraph, matrix: &Matrix) -> std::io::Result<()> {
    writeln!(out, "{} {}", matrix.nrows(), matrix.ncols())?;
    for (id, row) in kg.entity_ids().zip(matrix.rows()) {
        write!(out, "{id}")?;
        for v in row {
            write!(out, " {v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenAggregation {
    Sum,
    Mean,
    Max,
}

/// Combines per-token vectors of one label into a single vector.
pub fn aggregate_token_embeddings(tokens: &[Vec<f64>], mode: TokenAggregation) -> Result<Vec<f64>> {
    let first = tokens
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty token list"))?;
    let dim = first.len();
    if let Some(bad) = tokens.iter().find(|t| t.len() != dim) {
        return Err(Error::invalid(format!("ragged token vectors: {} vs {dim}", bad.len())));
    }
    let mut out = first.clone();
    for t in &tokens[1..] {
        for (o, &v) in out.iter_mut().zip(t) {
            match mode {
                TokenAggregation::Sum | TokenAggregation::Mean => *o += v,
                TokenAggregation::Max => *o = o.max(v),
            }
        }
    }
    if mode == TokenAggregation::Mean {
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }
    Ok(out)
}

/// Sum of the word vectors of the whitespace-separated tokens of `label`.
/// Unknown tokens contribute `fallback`; a label without tokens maps to
/// `fallback`.
pub fn init_from_word_vectors(label: &str, word_table: &HashMap<String, Vec<f64>>, fallback: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fallback.len()];
    let mut any = false;
    for token in label.split_whitespace() {
        any = true;
        let v = word_table.get(token).map(Vec::as_slice).unwrap_or(fallback);
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    if any {
        out
    } else {
        fallback.to_vec()
    }
}
