use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dist2, Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub centroids: Vec<Point>,
    /// Cluster id per point.
    pub assignment: Vec<usize>,
    pub iterations: usize,
    /// Sum of squared point-to-centroid distances after each assignment step.
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Stops once no centroid moves by `tol` or more, or after `max_iter` updates.
/// A cluster left empty by an update is re-seeded at the point farthest from
/// its current centroid.
pub fn kmeans(cloud: &PointCloud, n: usize, max_iter: usize, tol: f64, seed: u64) -> Result<ClusterAssignment> {
    kmeans_points(cloud.points(), n, max_iter, tol, seed)
}

pub(crate) fn kmeans_points(
    pts: &[Point],
    n: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<ClusterAssignment> {
    if n == 0 || n > pts.len() {
        return Err(Error::Cardinality(format!(
            "kmeans needs 1 <= n <= N, got n = {n} for N = {}",
            pts.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(pts, n, &mut rng);
    let (mut assignment, mut cost) = assign(pts, &centroids);
    let mut history = vec![cost.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = update(pts, &centroids, &assignment, &cost);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = next;
        (assignment, cost) = assign(pts, &centroids);
        history.push(cost.iter().sum());
        if shift < tol {
            break;
        }
    }
    Ok(ClusterAssignment {
        centroids,
        assignment,
        iterations,
        inertia_history: history,
    })
}

fn plus_plus(pts: &[Point], n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(n);
    centroids.push(pts[rng.random_range(0..pts.len())]);
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen.unwrap_or(0)
        } else {
            // every point coincides with a centroid already
            rng.random_range(0..pts.len())
        };
        let c = pts[pick];
        for (d, p) in d2.iter_mut().zip(pts) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Nearest centroid per point (ties to the lower centroid id) and the squared distance to it.
fn assign(pts: &[Point], centroids: &[Point]) -> (Vec<usize>, Vec<f64>) {
    let mut ids = Vec::with_capacity(pts.len());
    let mut cost = Vec::with_capacity(pts.len());
    for p in pts {
        let mut best = f64::INFINITY;
        let mut at = 0;
        for (j, c) in centroids.iter().enumerate() {
            let d = dist2(p, c);
            if d < best {
                best = d;
                at = j;
            }
        }
        ids.push(at);
        cost.push(best);
    }
    (ids, cost)
}

fn update(pts: &[Point], old: &[Point], assignment: &[usize], cost: &[f64]) -> Vec<Point> {
    let n = old.len();
    let mut sums = vec![[0.0; 3]; n];
    let mut counts = vec![0usize; n];
    for (p, &a) in pts.iter().zip(assignment) {
        counts[a] += 1;
        for k in 0..3 {
            sums[a][k] += p[k];
        }
    }
    let mut next: Vec<Point> = sums
        .iter()
        .zip(&counts)
        .zip(old)
        .map(|((s, &c), o)| if c > 0 { s.map(|v| v / c as f64) } else { *o })
        .collect();
    let empty: Vec<usize> = (0..n).filter(|&j| counts[j] == 0).collect();
    if !empty.is_empty() {
        // farthest points first, lower index on ties
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| cost[b].total_cmp(&cost[a]).then(a.cmp(&b)));
        for (j, &i) in empty.iter().zip(&order) {
            next[*j] = pts[i];
        }
    }
    next
}
