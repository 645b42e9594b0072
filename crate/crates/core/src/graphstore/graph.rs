use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;

use indexmap::IndexSet;

use crate::error::{Error, Result};

/// Index pair `(left entity, right entity)`.
pub type AlignmentPair = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

/// Directed multigraph of entities connected by typed relations.
///
/// Entities and relations are indexed contiguously in order of first
/// appearance; the original string identifiers are kept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns an entity, returning its index.
    pub fn add_entity(&mut self, id: &str) -> usize {
        match self.entities.get_index_of(id) {
            Some(i) => i,
            None => self.entities.insert_full(id.to_owned()).0,
        }
    }

    pub fn add_relation(&mut self, id: &str) -> usize {
        match self.relations.get_index_of(id) {
            Some(i) => i,
            None => self.relations.insert_full(id.to_owned()).0,
        }
    }

    pub fn add_triple(&mut self, head: &str, relation: &str, tail: &str) {
        let head = self.add_entity(head);
        let relation = self.add_relation(relation);
        let tail = self.add_entity(tail);
        self.triples.push(Triple { head, relation, tail });
    }

    /// Builds a graph over `n_entities` entities named `{prefix}{i}` and
    /// relations named `r{k}` from index triples.
    pub fn from_indexed(
        prefix: &str,
        n_entities: usize,
        n_relations: usize,
        triples: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let mut kg = Self::new();
        for i in 0..n_entities {
            kg.add_entity(&format!("{prefix}{i}"));
        }
        for r in 0..n_relations {
            kg.add_relation(&format!("r{r}"));
        }
        for &(head, relation, tail) in triples {
            if head >= n_entities || tail >= n_entities || relation >= n_relations {
                return Err(Error::invalid(format!(
                    "triple ({head}, {relation}, {tail}) out of bounds"
                )));
            }
            kg.triples.push(Triple { head, relation, tail });
        }
        Ok(kg)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_index(&self, id: &str) -> Option<usize> {
        self.entities.get_index_of(id)
    }

    pub fn entity_id(&self, index: usize) -> &str {
        &self.entities[index]
    }

    pub fn relation_id(&self, index: usize) -> &str {
        &self.relations[index]
    }

    pub fn entity_ids(&self) -> impl ExactSizeIterator<Item = &str> {
        self.entities.iter().map(String::as_str)
    }

    /// Head and tail entity sets of every relation.
    pub fn incidence(&self) -> RelationIncidence {
        let mut heads = vec![BTreeSet::new(); self.num_relations()];
        let mut tails = vec![BTreeSet::new(); self.num_relations()];
        for t in &self.triples {
            heads[t.relation].insert(t.head);
            tails[t.relation].insert(t.tail);
        }
        RelationIncidence {
            heads: heads.into_iter().map(|s| s.into_iter().collect()).collect(),
            tails: tails.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }
}

/// Per relation, the sorted distinct head entities `H_r` and tail entities
/// `T_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationIncidence {
    pub heads: Vec<Vec<usize>>,
    pub tails: Vec<Vec<usize>>,
}

impl RelationIncidence {
    pub fn num_relations(&self) -> usize {
        self.heads.len()
    }
}

/// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped.
pub fn parse_triples<R: BufRead>(reader: R, source: &str) -> Result<KnowledgeGraph> {
    let mut kg = KnowledgeGraph::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        kg.add_triple(fields[0], fields[1], fields[2]);
    }
    if kg.num_triples() == 0 {
        return Err(Error::EmptyInput(source.to_owned()));
    }
    Ok(kg)
}

/// Reads `left_id<TAB>right_id` lines and resolves them against both graphs.
pub fn parse_alignments<R: BufRead>(
    reader: R,
    source: &str,
    left: &KnowledgeGraph,
    right: &KnowledgeGraph,
) -> Result<Vec<AlignmentPair>> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: lineno + 1,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        let l = left.entity_index(fields[0]).ok_or_else(|| Error::UnknownEntity {
            id: fields[0].to_owned(),
            side: "left",
        })?;
        let r = right.entity_index(fields[1]).ok_or_else(|| Error::UnknownEntity {
            id: fields[1].to_owned(),
            side: "right",
        })?;
        if !seen.insert((l, r)) {
            return Err(Error::DuplicateAlignment(fields[0].to_owned(), fields[1].to_owned()));
        }
        pairs.push((l, r));
    }
    Ok(pairs)
}

/// Two graphs and their gold alignment. m:n alignments are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub left: KnowledgeGraph,
    pub right: KnowledgeGraph,
    pub alignments: Vec<AlignmentPair>,
}

impl GraphPair {
    pub fn new(left: KnowledgeGraph, right: KnowledgeGraph, alignments: Vec<AlignmentPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &(l, r) in &alignments {
            if l >= left.num_entities() || r >= right.num_entities() {
                return Err(Error::invalid(format!("alignment ({l}, {r}) out of bounds")));
            }
            if !seen.insert((l, r)) {
                return Err(Error::DuplicateAlignment(
                    left.entity_id(l).to_owned(),
                    right.entity_id(r).to_owned(),
                ));
            }
        }
        Ok(Self {
            left,
            right,
            alignments,
        })
    }

    /// The pair with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            left: self.right.clone(),
            right: self.left.clone(),
            alignments: self.alignments.iter().map(|&(l, r)| (r, l)).collect(),
        }
    }
}
