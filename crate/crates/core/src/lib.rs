//! Shared-nearest-neighbor density clustering over datasets that change.
//!
//! [`snnd_cluster`] clusters a dataset from scratch. [`bisd_update`] applies a
//! batch of insertions and deletions to a previously clustered state and
//! produces exactly the clustering a fresh run over the updated data would.
//! [`sequential_update`] applies the same batch one change at a time, as a
//! baseline for timing. States persist across invocations through the text
//! snapshots in [`persistence`].

pub mod bench;
pub mod bisd;
pub mod dataset;
pub mod error;
pub mod neighbors;
pub mod persistence;
pub mod sequential;
pub mod snn_graph;
pub mod snnd;
mod union_find;

pub use bisd::{bisd_update, combine_affected, deletion_phase, insertion_phase, update_snn_graph, AffectedSets};
pub use dataset::{apply_batch_ids, distance, load_points, Dataset, Point, PointId, UpdateBatch};
pub use error::{Error, Result};
pub use neighbors::{build_wlist, ExtendedNeighborList, Neighbor};
pub use persistence::{load_state, save_state};
pub use sequential::sequential_update;
pub use snn_graph::{
    build_snn_graph, cluster_graph, label_cores, labels_isomorphic, snn_similarity, ClusterAssignment, Label, Params,
    SnnGraph,
};
pub use snnd::{snnd_cluster, EngineState};

/// Environment variable capping internal parallelism.
pub const WORKERS_ENV: &str = "SNNDYN_WORKERS";

/// Worker count requested through [`WORKERS_ENV`], if set to a positive
/// integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("failed to start worker pool")
        .install(f)
}
