//! Federated learning by centroid exchange.
//!
//! Clients cluster the rows of every weight matrix with k-means and send only
//! the centroids. The server averages centroids, and each client moves every
//! row by the displacement of its own cluster, using memberships that never
//! leave the client. Frames are sealed with AES-256-GCM after a preshared
//! secret attestation handshake.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod data;
pub mod dp;
pub mod driver;
pub mod error;
pub mod model;
pub mod protocol;
pub mod seed;
pub mod trainer;
pub mod transport;
pub mod verify;

pub use clustering::{
    adaptive_cluster_count, do_clustering, kmeans, kmeans_warm, recluster, refit, ClusteringResult,
    ModelClustering,
};
pub use error::{Error, Result};
pub use model::{fedavg, LayeredModel, WeightMatrix};
pub use protocol::{
    aggregate_centroids, approximation_error, compute_difference, estimate_global_model,
    CentroidSet, DiffSet, ErrorReport,
};
