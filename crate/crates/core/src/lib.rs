//! Entity-centric retrieval for question answering.
//!
//! Documents are split into chunks, a model lists the entities each chunk
//! mentions together with short descriptions, and mentions with the same
//! normalized name are merged into classes whose descriptions are
//! concatenated and embedded. At query time the classes closest to the
//! query vote for the chunks they occur in, and an approval-based committee
//! rule elects the context. [`alignment`] offers an alternative selection
//! that distributes strength over classes under per-chunk budgets.

pub mod alignment;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod extraction;
pub mod gateway;
pub mod index;
pub mod report;
pub mod retrieval;

pub use alignment::linalg::{self, Matrix};
pub use alignment::{
    aligned_retrieve, aligned_retrieve_with_vector, solve_cls, solve_utility, AlignConfig, AlignMethod,
    AlignmentProblem, AlignmentReport, AlignmentSolution, SolveStatus, UtilityOptions,
};
pub use corpus::{segment, Chunk, Document, SegmentConfig};
pub use embedding::{embed, EmbedBackend, EmbedConfig, EmbeddingVector};
pub use error::{Error, Result};
pub use extraction::{extract, shorten, EntityMention, ExtractorBackend, ExtractorConfig};
pub use gateway::{answer_prompt, GatewayConfig, Message, ModelGateway, Phase, Role, TokenUsage};
pub use index::{
    build_classes, build_incidence, build_index, build_index_from_documents, load_index, normalize_name, save_index,
    EquivalenceClass, IncidenceMatrix, Index, IndexConfig,
};
pub use retrieval::{
    elect_chunks, filter_ballots, retrieve, top_k_classes, Ballots, ClassScore, ElectionConfig, ElectionRule, Metric,
    RetrievalResult, RetrievalStatus, SimilarityConfig,
};
