//! Evaluation toolkit for clustering non-categorical 3D shape collections.
//!
//! The crate models a shape collection as a complete similarity graph whose
//! edges carry `+1` (similar), `-1` (dissimilar) or `0` (unknown). Clusterings
//! and human annotation rounds both produce labelings of that graph, which are
//! then compared with edge-level external indices, majority-vote ensembles and
//! geometry-based silhouette analysis.

pub mod annotation;
pub mod clusterinit;
pub mod distances;
pub mod ensemble;
pub mod error;
pub mod fmt;
pub mod geometry;
pub mod kdtree;
pub mod metrics;
pub mod simgraph;

pub use error::{Error, Result};
pub use simgraph::{EdgeKey, EdgeLabel, LabeledEdgeSet, ModelId, Partition};
