//! Linear cross-space mapping, nearest-neighbour retrieval with hubness
//! correction, and the evaluation utilities built around them.

pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod hubness;
pub mod mapper;
pub mod retrieval;

pub use embedding::{EmbeddingFormat, EmbeddingSpace};
pub use error::{Error, Result};
pub use mapper::{apply_map, LinearMap, Objective};
pub use retrieval::{cosine_matrix, query, Method, NeighborResult, SimilarityMatrix};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    mod embeddings {}
    #[doc = include_str!("../../../book/src/mapping.md")]
    mod mapping {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/hubness.md")]
    mod hubness {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
