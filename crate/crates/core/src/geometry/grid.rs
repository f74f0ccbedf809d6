//! Uniform bucket grid for exact nearest-neighbor and range queries on large clouds.

use std::collections::BinaryHeap;

use super::{dist2, Point};

/// Point counts above this use the grid; at or below it the queries scan everything.
pub const BRUTE_FORCE_LIMIT: usize = 4096;

const TARGET_PER_CELL: f64 = 4.0;

/// CSR layout: the points of cell `c` are `order[start[c]..start[c + 1]]`.
pub(crate) struct Grid<'a> {
    points: &'a [Point],
    origin: Point,
    cell: f64,
    dims: [usize; 3],
    start: Vec<usize>,
    order: Vec<usize>,
}

/// Max-heap entry ordered by `(squared distance, index)`.
#[derive(Clone, Copy, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> Grid<'a> {
    /// Buckets `subset` of `points` (all points when `None`).
    pub(crate) fn build(points: &'a [Point], subset: Option<&[usize]>) -> Self {
        let ids: Vec<usize> = match subset {
            Some(s) => s.to_vec(),
            None => (0..points.len()).collect(),
        };
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &ids {
            for k in 0..3 {
                lo[k] = lo[k].min(points[i][k]);
                hi[k] = hi[k].max(points[i][k]);
            }
        }
        let extent: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]).max(1e-9)).collect();
        let volume: f64 = extent.iter().product();
        let cells_wanted = (ids.len() as f64 / TARGET_PER_CELL).max(1.0);
        let mut cell = (volume / cells_wanted).cbrt();
        // flat clouds: keep the cell count bounded by the point count
        let max_extent = extent.iter().cloned().fold(0.0, f64::max);
        cell = cell.max(max_extent / cells_wanted.max(1.0));
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as usize + 1).max(1));
        let ncells = dims[0] * dims[1] * dims[2];
        let mut grid = Grid {
            points,
            origin: lo,
            cell,
            dims,
            start: vec![0; ncells + 1],
            order: vec![0; ids.len()],
        };
        let keys: Vec<usize> = ids.iter().map(|&i| grid.flat(grid.cell_of(&points[i]))).collect();
        for &k in &keys {
            grid.start[k + 1] += 1;
        }
        for c in 0..ncells {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        // ids are placed in input order, so each bucket stays sorted when `subset` is
        for (&i, &k) in ids.iter().zip(&keys) {
            grid.order[fill[k]] = i;
            fill[k] += 1;
        }
        grid
    }

    fn cell_of(&self, p: &Point) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let c = ((p[k] - self.origin[k]) / self.cell).floor();
            if c <= 0.0 {
                0
            } else {
                (c as usize).min(self.dims[k] - 1)
            }
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    fn bucket(&self, c: [usize; 3]) -> &[usize] {
        let f = self.flat(c);
        &self.order[self.start[f]..self.start[f + 1]]
    }

    /// Visits every cell at Chebyshev distance exactly `ring` from `center`.
    fn for_ring(&self, center: [usize; 3], ring: usize, mut f: impl FnMut(&[usize])) {
        let r = ring as isize;
        let lo = |k: usize| (center[k] as isize - r).max(0);
        let hi = |k: usize| (center[k] as isize + r).min(self.dims[k] as isize - 1);
        for x in lo(0)..=hi(0) {
            for y in lo(1)..=hi(1) {
                for z in lo(2)..=hi(2) {
                    let dx = (x - center[0] as isize).abs();
                    let dy = (y - center[1] as isize).abs();
                    let dz = (z - center[2] as isize).abs();
                    if dx.max(dy).max(dz) == r {
                        f(self.bucket([x as usize, y as usize, z as usize]));
                    }
                }
            }
        }
    }

    fn max_ring(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(1)
    }

    /// The `k` nearest indexed points to `q`, ascending by `(distance, index)`.
    pub(crate) fn k_nearest(&self, q: &Point, k: usize) -> Vec<(f64, usize)> {
        let center = self.cell_of(q);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for ring in 0..=self.max_ring() {
            self.for_ring(center, ring, |bucket| {
                for &i in bucket {
                    let c = Candidate(dist2(q, &self.points[i]), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if let Some(top) = heap.peek() {
                        if c < *top {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
            });
            // every unvisited point lies farther than `ring` whole cells away
            if heap.len() == k {
                let reach = ring as f64 * self.cell;
                if heap.peek().is_some_and(|t| t.0 < reach * reach) {
                    break;
                }
            }
        }
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.0, c.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    /// Every indexed point with squared distance `<= r2` from `q`, ascending by index.
    pub(crate) fn within(&self, q: &Point, r2: f64) -> Vec<usize> {
        let center = self.cell_of(q);
        let rings = (r2.sqrt() / self.cell).ceil() as usize + 1;
        let mut out = Vec::new();
        for ring in 0..=rings.min(self.max_ring()) {
            self.for_ring(center, ring, |bucket| {
                out.extend(bucket.iter().copied().filter(|&i| dist2(q, &self.points[i]) <= r2));
            });
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Point> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [r.random::<f64>(), r.random::<f64>(), r.random::<f64>() * 0.1])
            .collect()
    }

    #[test]
    fn k_nearest_matches_full_sort() {
        let pts = cloud(3000, 1);
        let grid = Grid::build(&pts, None);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let q = [r.random_range(-0.2..1.2), r.random_range(-0.2..1.2), r.random_range(-0.2..0.3)];
            let k = r.random_range(1..40);
            let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (dist2(&q, p), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            all.truncate(k);
            assert_eq!(grid.k_nearest(&q, k), all);
        }
    }

    #[test]
    fn within_matches_scan() {
        let pts = cloud(2000, 3);
        let grid = Grid::build(&pts, None);
        for (i, q) in pts.iter().enumerate().step_by(97) {
            let r2 = 0.01 * (1 + i % 5) as f64;
            let expect: Vec<usize> = (0..pts.len()).filter(|&j| dist2(q, &pts[j]) <= r2).collect();
            assert_eq!(grid.within(q, r2), expect);
        }
    }
}
