//! Graph-supervised node feature extraction.
//!
//! Node embeddings are learned by predicting each node's neighborhood (its
//! adjacency row) from its own attributes, treated as an extreme multi-label
//! classification problem over the node set. Labels are organized in a
//! hierarchical tree built from PIFA label embeddings, and a linear encoder
//! with per-level one-vs-all rankers is trained coarse to fine.
//!
//! Also included: a contextual stochastic block model generator with the
//! statistics used to check the method's theory, a link-prediction baseline,
//! and downstream node classifiers for judging embedding quality.

pub mod csbm;
pub mod downstream;
pub mod error;
pub mod graph;
pub mod io;
pub mod matcher;
pub mod pipeline;
pub mod rng;
pub mod sparse;
pub mod text;
pub mod tree;

pub use error::{Error, Result};
pub use graph::{ClusteringInput, ClusteringMode, Graph};
pub use sparse::{DenseMatrix, FeatureMatrix, SparseRowMatrix};
pub use tree::LabelTree;
