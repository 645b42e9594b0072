//! Plain-text parameter checkpoints.
//!
//! Layout:
//!
//! ```text
//! kgalign-checkpoint 1
//! model <name>
//! arrays <count>
//! <array name> <rows> <cols>
//! <row 0 values, space separated>
//! ...
//! ```
//!
//! Parameters come first, in registration order, followed by the batch-norm
//! running statistics as `bn.<i>.mean` / `bn.<i>.var` rows. Values use the
//! shortest representation that parses back to the same `f64`.

use std::io::{BufRead, Write};

use super::Model;
use crate::diffmath::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "kgalign-checkpoint 1";

/// Named arrays of one model snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    pub arrays: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn capture(model: &Model) -> Self {
        let mut arrays: Vec<(String, Matrix)> = model
            .store()
            .map(|s| s.names().iter().cloned().zip(s.values().iter().cloned()).collect())
            .unwrap_or_default();
        for (i, bn) in model.bn_states().iter().enumerate() {
            let row = |v: &[f64]| Matrix::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
            arrays.push((format!("bn.{i}.mean"), row(&bn.running_mean)));
            arrays.push((format!("bn.{i}.var"), row(&bn.running_var)));
        }
        Self {
            model: model.name().to_string(),
            arrays,
        }
    }

    /// Copies the snapshot into `model`, which must have the same
    /// architecture.
    pub fn restore(&self, model: &mut Model) -> Result<()> {
        if self.model != model.name() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} model, target is {}",
                self.model,
                model.name()
            )));
        }
        let expected = Checkpoint::capture(model);
        if expected.arrays.len() != self.arrays.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays, found {}",
                expected.arrays.len(),
                self.arrays.len()
            )));
        }
        for ((en, ev), (n, v)) in expected.arrays.iter().zip(&self.arrays) {
            if en != n || ev.dim() != v.dim() {
                return Err(Error::Checkpoint(format!(
                    "array `{n}` {:?} does not match `{en}` {:?}",
                    v.dim(),
                    ev.dim()
                )));
            }
        }
        let n_params = model.store().map_or(0, |s| s.len());
        if let Some(store) = model.store_mut() {
            for (dst, (_, v)) in store.values_mut().zip(&self.arrays) {
                dst.assign(v);
            }
        }
        let stats = &self.arrays[n_params..];
        for (i, bn) in model.bn_states_mut().iter_mut().enumerate() {
            bn.running_mean = stats[2 * i].1.iter().copied().collect();
            bn.running_var = stats[2 * i + 1].1.iter().copied().collect();
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, checkpoint: &Checkpoint) -> Result<()> {
    let io = |e| Error::io("<checkpoint>", e);
    writeln!(w, "{CHECKPOINT_HEADER}").map_err(io)?;
    writeln!(w, "model {}", checkpoint.model).map_err(io)?;
    writeln!(w, "arrays {}", checkpoint.arrays.len()).map_err(io)?;
    for (name, m) in &checkpoint.arrays {
        writeln!(w, "{name} {} {}", m.nrows(), m.ncols()).map_err(io)?;
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" ")).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Checkpoint> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(Error::io("<checkpoint>", e)),
            None => Err(Error::Checkpoint(format!("unexpected end of file, expected {what}"))),
        }
    };
    let bad = |line: usize, msg: String| Error::Checkpoint(format!("line {line}: {msg}"));
    let (_, header) = next("header")?;
    if header.trim() != CHECKPOINT_HEADER {
        return Err(Error::Checkpoint(format!("unsupported header `{header}`")));
    }
    let (ln, model_line) = next("model line")?;
    let model = model_line
        .strip_prefix("model ")
        .ok_or_else(|| bad(ln, "expected `model <name>`".into()))?
        .trim()
        .to_string();
    let (ln, count_line) = next("array count")?;
    let count: usize = count_line
        .strip_prefix("arrays ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| bad(ln, "expected `arrays <count>`".into()))?;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let (ln, head) = next("array header")?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        let [name, rows, cols] = parts[..] else {
            return Err(bad(ln, format!("malformed array header `{head}`")));
        };
        let parse_dim = |s: &str| s.parse::<usize>().map_err(|e| bad(ln, e.to_string()));
        let (rows, cols) = (parse_dim(rows)?, parse_dim(cols)?);
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = next("array row")?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| bad(ln, e.to_string())))
                .collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(bad(ln, format!("expected {cols} values, found {}", row.len())));
            }
            values.extend(row);
        }
        let m = Matrix::from_shape_vec((rows, cols), values).expect("checked shape");
        arrays.push((name.to_string(), m));
    }
    Ok(Checkpoint { model, arrays })
}
