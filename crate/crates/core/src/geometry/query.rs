use super::grid::{Grid, BRUTE_FORCE_LIMIT};
use super::{dist2, Point, PointCloud};
use crate::error::{Error, Result};

/// The `k` nearest base points of every query, ascending by distance with ties to
/// the lower index.
pub fn knn(queries: &[Point], base: &PointCloud, k: usize) -> Result<Vec<Vec<usize>>> {
    knn_points(queries, base.points(), k)
}

pub(crate) fn knn_points(queries: &[Point], base: &[Point], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = base.len();
    if k > n {
        return Err(Error::Cardinality(format!(
            "knn asked for k = {k} neighbors among {n} points"
        )));
    }
    if k == 0 {
        return Ok(vec![Vec::new(); queries.len()]);
    }
    // a full scan is already optimal when k is a sizeable fraction of N
    if n > BRUTE_FORCE_LIMIT && k * 16 < n {
        let grid = Grid::build(base, None);
        return Ok(queries
            .iter()
            .map(|q| grid.k_nearest(q, k).into_iter().map(|(_, i)| i).collect())
            .collect());
    }
    Ok(queries.iter().map(|q| knn_scan(q, base, k)).collect())
}

fn knn_scan(q: &Point, base: &[Point], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = base.iter().enumerate().map(|(i, p)| (dist2(q, p), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    all.into_iter().map(|(_, i)| i).collect()
}

/// Fixed-width radius groups around each center point.
///
/// Each group lists up to `max_samples` point indices within `radius` of its
/// center, in index order. Short groups are padded by repeating their first
/// member; a group that finds nothing falls back to the center itself.
pub fn ball_query(
    cloud: &PointCloud,
    centers: &[usize],
    radius: f64,
    max_samples: usize,
) -> Result<Vec<Vec<usize>>> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("ball query radius must be positive, got {radius}")));
    }
    if max_samples == 0 {
        return Err(Error::Config("ball query needs max_samples >= 1".into()));
    }
    let pts = cloud.points();
    if let Some(&bad) = centers.iter().find(|&&c| c >= pts.len()) {
        return Err(Error::Cardinality(format!(
            "center index {bad} out of range for {} points",
            pts.len()
        )));
    }
    let r2 = radius * radius;
    let grid = (pts.len() > BRUTE_FORCE_LIMIT).then(|| Grid::build(pts, None));
    Ok(centers
        .iter()
        .map(|&c| {
            let q = &pts[c];
            let mut found: Vec<usize> = match &grid {
                Some(g) => {
                    let mut v = g.within(q, r2);
                    v.truncate(max_samples);
                    v
                }
                None => (0..pts.len())
                    .filter(|&i| dist2(q, &pts[i]) <= r2)
                    .take(max_samples)
                    .collect(),
            };
            if found.is_empty() {
                found.push(c);
            }
            let first = found[0];
            found.resize(max_samples, first);
            found
        })
        .collect())
}

/// Largest distance from any point of the cloud to its nearest sampled point.
pub fn covering_radius(cloud: &PointCloud, sample: &[usize]) -> Result<f64> {
    let pts = cloud.points();
    if sample.is_empty() {
        return Err(Error::EmptyInput("covering_radius"));
    }
    if let Some(&bad) = sample.iter().find(|&&i| i >= pts.len()) {
        return Err(Error::Cardinality(format!(
            "sample index {bad} out of range for {} points",
            pts.len()
        )));
    }
    let worst = if pts.len() > BRUTE_FORCE_LIMIT && sample.len() > 16 {
        let grid = Grid::build(pts, Some(sample));
        pts.iter()
            .map(|p| grid.k_nearest(p, 1)[0].0)
            .fold(0.0, f64::max)
    } else {
        pts.iter()
            .map(|p| {
                sample
                    .iter()
                    .map(|&s| dist2(p, &pts[s]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(worst.sqrt())
}
