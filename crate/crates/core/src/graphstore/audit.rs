use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::graph::KnowledgeGraph;
use crate::error::{Error, Result};

/// `(entity, attribute, value)` record from an attribute-triple file.
pub type AttributeTriple = (String, String, String);

/// Reads `entity<TAB>attribute<TAB>value` lines; the value may itself contain
/// tabs.
pub fn parse_attribute_triples<R: BufRead>(reader: R, source: &str) -> Result<Vec<AttributeTriple>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(e), Some(a), Some(v)) => out.push((e.to_owned(), a.to_owned(), v.to_owned())),
            _ => {
                return Err(Error::Parse {
                    path: source.to_owned(),
                    line: lineno + 1,
                    message: "expected entity, attribute and value".into(),
                })
            }
        }
    }
    Ok(out)
}

/// How the labels of one graph side were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideAudit {
    pub via_attribute: usize,
    pub via_id: usize,
    /// Label chosen for every entity, in entity index order.
    pub labels: Vec<String>,
}

impl SideAudit {
    pub fn total(&self) -> usize {
        self.via_attribute + self.via_id
    }

    /// Share of entities labelled from their URI, in percent.
    pub fn via_id_percent(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * self.via_id as f64 / self.total() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAuditReport {
    pub left: SideAudit,
    pub right: SideAudit,
}

/// Last path segment of an entity URI.
pub fn uri_suffix(id: &str) -> &str {
    id.rsplit('/').next().unwrap_or(id)
}

/// Labels each entity with the value of the first name attribute (in
/// priority order) it carries, falling back to the URI suffix.
pub fn audit_labels(
    kg: &KnowledgeGraph,
    attribute_triples: &[AttributeTriple],
    name_attributes: &[String],
) -> SideAudit {
    let priority: HashMap<&str, usize> = name_attributes
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    // entity index -> (priority, value) of the best name attribute seen
    let mut best: HashMap<usize, (usize, &str)> = HashMap::new();
    for (entity, attribute, value) in attribute_triples {
        let (Some(&p), Some(e)) = (priority.get(attribute.as_str()), kg.entity_index(entity)) else {
            continue;
        };
        match best.get(&e) {
            Some(&(q, _)) if q <= p => {}
            _ => {
                best.insert(e, (p, value.as_str()));
            }
        }
    }

    let mut audit = SideAudit {
        via_attribute: 0,
        via_id: 0,
        labels: Vec::with_capacity(kg.num_entities()),
    };
    for (i, id) in kg.entity_ids().enumerate() {
        match best.get(&i) {
            Some(&(_, value)) => {
                audit.via_attribute += 1;
                audit.labels.push(value.to_owned());
            }
            None => {
                audit.via_id += 1;
                audit.labels.push(uri_suffix(id).to_owned());
            }
        }
    }
    audit
}
