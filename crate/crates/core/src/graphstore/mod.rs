//! Knowledge-graph data model, dataset ingestion, derived indexes, splits,
//! initial features and the label-provenance audit.

mod audit;
mod graph;
mod index;
mod init;
mod manifest;
mod split;
mod stats;

pub use audit::{audit_labels, parse_attribute_triples, uri_suffix, AttributeTriple, LabelAuditReport, SideAudit};
pub use graph::{parse_alignments, parse_triples, AlignmentPair, GraphPair, KnowledgeGraph, RelationIncidence, Triple};
pub use index::{
    build_directed_row_normalized, build_normalized_adjacency, build_primal_edges, jaccard_relation_similarity,
    DirectedAdjacency, GraphIndexes, NormalizedAdjacency, PrimalEdges,
};
pub use init::{
    aggregate_token_embeddings, init_from_word_vectors, load_embeddings, write_embeddings, EmbeddingTable,
    RowNormalization, TokenAggregation,
};
pub use manifest::{Dataset, DatasetManifest, SideManifest};
pub use split::{
    make_split, split_with_test, AlignmentSplit, TrainingView, DEFAULT_TEST_FRACTION, DEFAULT_TRAIN_FRACTION,
    SPLIT_GENERATOR,
};
pub use stats::{dataset_stats, DatasetStats, SideStats};
