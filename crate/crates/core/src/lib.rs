//! Dual-tree algorithms that are independent of the tree type.
//!
//! A search is a [`traversal::TraversalRule`] (a base case and a pruning
//! score) run by one of the traversals in [`traversal`] over a pair of
//! [`spacetree::SpaceTree`]s. kd-trees and cover trees share one arena
//! representation, so every rule works with either. Brute-force versions of
//! each search live in [`oracle`].

pub mod dataset;
pub mod emst;
pub mod error;
pub mod generate;
pub mod kde;
pub mod neighbor;
pub mod oracle;
pub mod range;
pub mod scalar;
pub mod spacetree;
pub mod traversal;

pub use dataset::{load_dataset, Dataset};
pub use emst::{emst, Edge, EmstConfig, EmstResult};
pub use error::{Error, Result};
pub use kde::{kde, KdeConfig, Kernel};
pub use neighbor::{knn_search, BoundMode, KnnConfig, NeighborMode, NeighborResults};
pub use range::{range_search, RangeConfig, RangeResults, RangeSpec};
pub use scalar::Scalar;
pub use spacetree::{SpaceTree, TreeConfig, TreeKind};
pub use traversal::{TraversalKind, TraversalStats};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type SpaceTree64 = SpaceTree<f64>;
pub type SpaceTree32 = SpaceTree<f32>;
pub type NeighborResults64 = NeighborResults<f64>;
pub type RangeResults64 = RangeResults<f64>;
pub type Kernel64 = Kernel<f64>;
