//! Graph construction, normalization, datasets, splits and edge perturbation.

mod dataset;
mod sparse;

pub use dataset::{
    load_bundle, make_graph_splits, read_edge_list, make_splits, ring_star_collection, sbm, DatasetBundle,
    Manifest, SbmConfig, SplitMasks, Targets, Task,
};
pub use sparse::SparseGraph;
