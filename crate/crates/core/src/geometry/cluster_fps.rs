use std::collections::HashSet;

use rayon::prelude::*;

use super::kmeans::kmeans_points;
use super::{knn_points, worker_count, FpsSweep, PointCloud, SampleMethod, SampleResult};
use crate::error::{Error, Result};

/// Divide-and-conquer farthest-point sampling.
///
/// k-means splits the cloud into `n_clusters` regions; each centroid takes its
/// `m_neighbors` nearest points and runs its own FPS sweep over them, started at
/// the point closest to the centroid. Sweeps run on `workers` threads and are
/// merged in cluster order, so the result does not depend on the thread count.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterFps {
    pub n_clusters: usize,
    /// Neighborhood size per cluster; `None` picks `2N / n_clusters`.
    pub m_neighbors: Option<usize>,
    pub seed: u64,
    /// 0 defers to [`worker_count`].
    pub workers: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
}

impl ClusterFps {
    pub fn new(n_clusters: usize, seed: u64) -> Self {
        ClusterFps {
            n_clusters,
            m_neighbors: None,
            seed,
            workers: 0,
            kmeans_max_iter: 20,
            kmeans_tol: 1e-4,
        }
    }

    pub fn with_neighbors(mut self, m: usize) -> Self {
        self.m_neighbors = Some(m);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    /// Neighborhood size actually used for a cloud of `n` points and quota `r`.
    pub fn neighbors_for(&self, n: usize, r: usize) -> usize {
        self.m_neighbors
            .unwrap_or_else(|| (2 * n / self.n_clusters.max(1)).clamp(r.min(n), n))
    }

    pub fn sample(&self, cloud: &PointCloud, k_total: usize) -> Result<SampleResult> {
        let pts = cloud.points();
        let n = pts.len();
        let c = self.n_clusters;
        if c == 0 || k_total == 0 || k_total % c != 0 {
            return Err(Error::Divisibility {
                what: "cluster_fps sample count",
                value: k_total,
                groups: c,
            });
        }
        if k_total > n {
            return Err(Error::Cardinality(format!(
                "cluster_fps asked for {k_total} samples from {n} points"
            )));
        }
        let r = k_total / c;
        let m = self.neighbors_for(n, r);
        if m < r || m > n {
            return Err(Error::Cardinality(format!(
                "cluster_fps needs quota {r} <= m_neighbors {m} <= N {n}"
            )));
        }

        let clusters = kmeans_points(pts, c, self.kmeans_max_iter, self.kmeans_tol, self.seed)?;
        let hoods = knn_points(&clusters.centroids, pts, m)?;
        let mut sweeps: Vec<FpsSweep> = hoods
            .into_iter()
            .map(|hood| {
                let nearest = hood[0];
                let mut sorted = hood;
                sorted.sort_unstable();
                let start = sorted.binary_search(&nearest).unwrap_or(0);
                FpsSweep::new(pts, sorted, start)
            })
            .collect();

        let workers = if self.workers == 0 { worker_count() } else { self.workers };
        let picks: Vec<Vec<usize>> = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| sweeps.par_iter_mut().map(|s| s.take(r)).collect())
        } else {
            sweeps.iter_mut().map(|s| s.take(r)).collect()
        };

        let indices = merge(&mut sweeps, picks, r, k_total)?;
        Ok(SampleResult {
            indices,
            method: SampleMethod::ClusterFps {
                n_clusters: c,
                m_neighbors: m,
                seed: self.seed,
            },
        })
    }
}

/// Union in cluster order; each cluster then refills its own duplicates from its sweep,
/// and any remaining shortfall is drawn round-robin from whichever sweeps still have points.
fn merge(sweeps: &mut [FpsSweep], picks: Vec<Vec<usize>>, r: usize, k_total: usize) -> Result<Vec<usize>> {
    let mut seen = HashSet::with_capacity(k_total);
    let mut out = Vec::with_capacity(k_total);
    let mut deficit = vec![0usize; sweeps.len()];
    for (j, list) in picks.into_iter().enumerate() {
        let fresh = list.into_iter().filter(|&i| seen.insert(i));
        let before = out.len();
        out.extend(fresh);
        deficit[j] = r - (out.len() - before);
    }
    for (j, sweep) in sweeps.iter_mut().enumerate() {
        while deficit[j] > 0 {
            match sweep.next_index() {
                Some(i) => {
                    if seen.insert(i) {
                        out.push(i);
                        deficit[j] -= 1;
                    }
                }
                None => break,
            }
        }
    }
    let mut live: Vec<bool> = vec![true; sweeps.len()];
    while out.len() < k_total && live.iter().any(|&l| l) {
        for (j, sweep) in sweeps.iter_mut().enumerate() {
            if out.len() == k_total {
                break;
            }
            if !live[j] {
                continue;
            }
            loop {
                match sweep.next_index() {
                    Some(i) if seen.insert(i) => {
                        out.push(i);
                        break;
                    }
                    Some(_) => continue,
                    None => {
                        live[j] = false;
                        break;
                    }
                }
            }
        }
    }
    if out.len() < k_total {
        return Err(Error::Cardinality(format!(
            "cluster neighborhoods cover only {} distinct points, {k_total} requested",
            out.len()
        )));
    }
    Ok(out)
}

/// [`ClusterFps::sample`] with the default neighborhood size and worker count.
pub fn cluster_fps(
    cloud: &PointCloud,
    n_clusters: usize,
    m_neighbors: Option<usize>,
    k_total: usize,
    seed: u64,
) -> Result<SampleResult> {
    let mut cfg = ClusterFps::new(n_clusters, seed);
    cfg.m_neighbors = m_neighbors;
    cfg.sample(cloud, k_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fps;

    fn grid_cloud() -> PointCloud {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                pts.push([x as f64, y as f64, ((x * y) % 3) as f64 * 0.1]);
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn one_cluster_everything_is_plain_fps() {
        let c = grid_cloud();
        let s = cluster_fps(&c, 1, Some(c.len()), 10, 3).unwrap();
        let centroid = c.centroid();
        let start = (0..c.len())
            .min_by(|&a, &b| {
                super::super::dist2(&c.points()[a], &centroid)
                    .total_cmp(&super::super::dist2(&c.points()[b], &centroid))
                    .then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(s.indices, fps(&c, 10, start).unwrap().indices);
    }

    #[test]
    fn divisibility_and_quota_errors() {
        let c = grid_cloud();
        assert!(matches!(cluster_fps(&c, 4, None, 10, 0), Err(Error::Divisibility { .. })));
        assert!(matches!(cluster_fps(&c, 2, Some(3), 10, 0), Err(Error::Cardinality(_))));
        assert!(matches!(cluster_fps(&c, 2, None, 40, 0), Err(Error::Cardinality(_))));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let c = grid_cloud();
        let one = ClusterFps::new(3, 5).with_workers(1).sample(&c, 12).unwrap();
        let four = ClusterFps::new(3, 5).with_workers(4).sample(&c, 12).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn full_cover_when_quota_equals_n() {
        let c = grid_cloud();
        let s = ClusterFps::new(4, 1).with_neighbors(36).sample(&c, 36).unwrap();
        let mut got = s.indices.clone();
        got.sort();
        assert_eq!(got, (0..36).collect::<Vec<_>>());
    }
}
