use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::graph::{GraphPair, KnowledgeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    /// Distinct entities of this side that occur in the alignment.
    pub aligned: usize,
    /// Entities without any counterpart.
    pub exclusive: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub left: SideStats,
    pub right: SideStats,
}

fn side(kg: &KnowledgeGraph, aligned: HashSet<usize>) -> SideStats {
    SideStats {
        entities: kg.num_entities(),
        relations: kg.num_relations(),
        triples: kg.num_triples(),
        aligned: aligned.len(),
        exclusive: kg.num_entities() - aligned.len(),
    }
}

pub fn dataset_stats(pair: &GraphPair) -> DatasetStats {
    DatasetStats {
        left: side(&pair.left, pair.alignments.iter().map(|p| p.0).collect()),
        right: side(&pair.right, pair.alignments.iter().map(|p| p.1).collect()),
    }
}
