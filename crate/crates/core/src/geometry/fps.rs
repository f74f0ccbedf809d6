use super::{Point, PointCloud, SampleMethod, SampleResult};
use crate::error::{Error, Result};

/// Incremental farthest-point sweep over a candidate subset of a point array.
///
/// Candidates must be listed in ascending point index so that distance ties
/// resolve to the lowest index. Already-chosen candidates carry a negative
/// distance so they never win the argmax.
pub(crate) struct FpsSweep {
    candidates: Vec<usize>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    min_d2: Vec<f64>,
    next: Option<usize>,
}

impl FpsSweep {
    /// `start` is a position inside `candidates`.
    pub(crate) fn new(points: &[Point], candidates: Vec<usize>, start: usize) -> Self {
        debug_assert!(candidates.windows(2).all(|w| w[0] < w[1]));
        let n = candidates.len();
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        for &i in &candidates {
            let p = points[i];
            xs.push(p[0]);
            ys.push(p[1]);
            zs.push(p[2]);
        }
        FpsSweep {
            next: (start < n).then_some(start),
            candidates,
            xs,
            ys,
            zs,
            min_d2: vec![f64::INFINITY; n],
        }
    }

    /// Picks the next point (point index, not candidate position), or `None` once every
    /// candidate has been chosen.
    pub(crate) fn next_index(&mut self) -> Option<usize> {
        let pick = self.next.take()?;
        self.min_d2[pick] = -1.0;
        let (px, py, pz) = (self.xs[pick], self.ys[pick], self.zs[pick]);
        let mut best = -1.0;
        let mut best_at = usize::MAX;
        for j in 0..self.min_d2.len() {
            let dx = self.xs[j] - px;
            let dy = self.ys[j] - py;
            let dz = self.zs[j] - pz;
            let d = dx * dx + dy * dy + dz * dz;
            let m = &mut self.min_d2[j];
            if d < *m {
                *m = d;
            }
            if *m > best {
                best = *m;
                best_at = j;
            }
        }
        if best >= 0.0 {
            self.next = Some(best_at);
        }
        Some(self.candidates[pick])
    }

    /// Up to `k` further picks.
    pub(crate) fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            match self.next_index() {
                Some(i) => out.push(i),
                None => break,
            }
        }
        out
    }
}

/// Greedy farthest-point sampling of `k` points starting from point `start`.
/// Each new pick maximizes its distance to everything picked so far; ties go to
/// the lowest point index.
pub fn fps(cloud: &PointCloud, k: usize, start: usize) -> Result<SampleResult> {
    fps_points(cloud.points(), k, start)
}

pub(crate) fn fps_points(points: &[Point], k: usize, start: usize) -> Result<SampleResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Cardinality(format!(
            "fps needs 1 <= k <= N, got k = {k} for N = {n}"
        )));
    }
    if start >= n {
        return Err(Error::Cardinality(format!(
            "fps start index {start} out of range for N = {n}"
        )));
    }
    let mut sweep = FpsSweep::new(points, (0..n).collect(), start);
    let indices = sweep.take(k);
    Ok(SampleResult {
        indices,
        method: SampleMethod::Fps { start },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> PointCloud {
        PointCloud::new(vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn unit_square_corners() {
        assert_eq!(fps(&square(), 3, 0).unwrap().indices, vec![0, 2, 1]);
    }

    #[test]
    fn k_equals_n_returns_everything() {
        let s = fps(&square(), 4, 1).unwrap();
        assert_eq!(s.indices, vec![1, 3, 0, 2]);
    }

    #[test]
    fn duplicate_points_stay_unique() {
        let c = PointCloud::new(vec![[0.0; 3]; 5]).unwrap();
        let s = fps(&c, 5, 2).unwrap();
        assert_eq!(s.indices, vec![2, 0, 1, 3, 4]);
    }

    #[test]
    fn cardinality_errors() {
        assert!(matches!(fps(&square(), 5, 0), Err(Error::Cardinality(_))));
        assert!(matches!(fps(&square(), 0, 0), Err(Error::Cardinality(_))));
        assert!(matches!(fps(&square(), 2, 4), Err(Error::Cardinality(_))));
    }
}
