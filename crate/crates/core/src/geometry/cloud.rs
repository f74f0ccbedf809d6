use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub type Point = [f64; 3];

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// N points in 3-space with optional per-point features and an optional class label.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    features: Option<Matrix>,
    label: Option<usize>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud"));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Format(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud {
            points,
            features: None,
            label: None,
        })
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.points.len() {
            return Err(Error::Dimension {
                op: "with_features",
                left: (self.points.len(), 3),
                right: features.shape(),
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: a cloud holds at least one point.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    /// Feature width, 0 when the cloud carries none.
    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().map_or(0, Matrix::cols)
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn coords_matrix(&self) -> Matrix {
        Matrix::from_fn(self.points.len(), 3, |r, c| self.points[r][c])
    }

    /// The cloud restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<PointCloud> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("subset"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.points.len()) {
            return Err(Error::Cardinality(format!(
                "index {bad} out of range for a cloud of {} points",
                self.points.len()
            )));
        }
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let features = self
            .features
            .as_ref()
            .map(|f| f.gather_rows(indices))
            .transpose()?;
        Ok(PointCloud {
            points,
            features,
            label: self.label,
        })
    }

    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    /// Largest distance from the origin.
    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| dist2(p, &[0.0; 3]))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Translates the centroid to the origin and scales into the unit ball.
    pub fn normalize_unit_sphere(&mut self) {
        let c = self.centroid();
        for p in &mut self.points {
            for k in 0..3 {
                p[k] -= c[k];
            }
        }
        self.scale_to_unit_ball();
    }

    /// Scales about the origin so the farthest point sits at distance 1.
    pub fn scale_to_unit_ball(&mut self) {
        let r = self.max_norm();
        if r > 0.0 {
            for p in &mut self.points {
                for v in p.iter_mut() {
                    *v /= r;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_are_enforced() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![[0.0, f64::NAN, 0.0]]).is_err());
        let c = PointCloud::new(vec![[0.0; 3], [1.0; 3]]).unwrap();
        assert!(c.clone().with_features(Matrix::zeros(3, 2)).is_err());
        let c = c.with_features(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(c.feature_dim(), 2);
    }

    #[test]
    fn normalization_lands_in_unit_ball() {
        let mut c = PointCloud::new(vec![[1.0, 1.0, 1.0], [3.0, 1.0, 1.0], [2.0, 5.0, 1.0]]).unwrap();
        c.normalize_unit_sphere();
        assert!((c.max_norm() - 1.0).abs() < 1e-12);
        let m = c.centroid();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
    }
}
