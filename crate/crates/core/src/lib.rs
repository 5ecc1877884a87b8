//! Hierarchical 1-nearest-neighbor graph embedding.
//!
//! The embedding is built in three optimization-free steps:
//!
//! 1. [`hierarchy`]: repeatedly connect every point to its nearest neighbor,
//!    collapse the connected components of that graph to their centroids and
//!    recurse, giving a tree of ever coarser groupings.
//! 2. [`linproj`]: a single linear map (PCA estimated on about a thousand
//!    hierarchy centroids by default) gives every point and centroid a
//!    preliminary position in the target space.
//! 3. [`translate`]: walking the tree top-down, each group of children is
//!    re-centred on its parent and scaled into a ball whose radius is a
//!    fraction of the parent's nearest-neighbor distance.
//!
//! [`transform::fit`] runs the whole pipeline and returns a
//! [`transform::ProjectionModel`] that can place unseen points.
//! [`metrics`] holds the quality measures used to evaluate embeddings.

pub mod dataio;
pub mod error;
pub mod hierarchy;
pub mod linproj;
pub mod matrix;
pub mod metrics;
pub mod nnsearch;
pub mod plot;
pub mod rng;
pub mod transform;
pub mod translate;

pub use error::{HnneError, Result};
pub use hierarchy::{build_hierarchy, Hierarchy, Partition};
pub use linproj::{InitMode, LinearMap};
pub use matrix::DataMatrix;
pub use nnsearch::{NeighborList, NnBackend};
pub use transform::{fit, FitOutput, FitParams, ProjectionModel};
pub use translate::TranslateParams;
