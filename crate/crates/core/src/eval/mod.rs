//! Clustering evaluation: k-means on encoded features, Hungarian-matched
//! accuracy, NMI, mode coverage of generated samples and a 2-D PCA export.

mod kmeans;
mod metrics;
mod projection;
mod report;

pub use kmeans::{kmeans, kmeans_single, KMeansResult, MAX_ITERATIONS};
pub use metrics::{contingency, hungarian_acc, min_cost_assignment, nmi};
pub use projection::{pca, project_2d, Pca};
pub use report::{encode_and_score, encoded_features, mode_coverage, nearest_centroid, ClusterReport, ModeCoverage};

/// Default number of k-means restarts.
pub const DEFAULT_RESTARTS: usize = 10;
