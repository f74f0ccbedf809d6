//! Point-set geometry: sampling, clustering, neighborhood queries and coverage.

mod cloud;
mod cluster_fps;
mod fps;
mod grid;
mod kmeans;
mod query;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use cloud::{dist2, Point, PointCloud};
pub use cluster_fps::{cluster_fps, ClusterFps};
pub use fps::fps;
pub use grid::BRUTE_FORCE_LIMIT;
pub use kmeans::{kmeans, ClusterAssignment};
pub use query::{ball_query, covering_radius, knn};

pub(crate) use fps::FpsSweep;
pub(crate) use query::knn_points;

/// How a [`SampleResult`] was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleMethod {
    Fps {
        start: usize,
    },
    ClusterFps {
        n_clusters: usize,
        m_neighbors: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    /// Unique point indices in selection order.
    pub indices: Vec<usize>,
    pub method: SampleMethod,
}

impl SampleResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Environment variable holding the default worker count (0 means one per core).
pub const THREADS_ENV: &str = "SHUFFLEPOINT_THREADS";

static WORKER_OVERRIDE: AtomicUsize = AtomicUsize::new(0);

/// Process-wide worker count that takes precedence over the environment. 0 clears it.
pub fn set_worker_override(workers: usize) {
    WORKER_OVERRIDE.store(workers, Ordering::Relaxed);
}

/// Worker threads for parallel sampling: the override, else `SHUFFLEPOINT_THREADS`,
/// else the available hardware parallelism.
pub fn worker_count() -> usize {
    let forced = WORKER_OVERRIDE.load(Ordering::Relaxed);
    if forced > 0 {
        return forced;
    }
    let from_env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if from_env > 0 {
        return from_env;
    }
    std::thread::available_parallelism().map_or(1, usize::from)
}
