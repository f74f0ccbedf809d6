use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

/// Jitter used by [`augment`].
pub const AUGMENT_JITTER: f64 = 0.02;

const TORUS_MAJOR: f64 = 1.0;
const TORUS_MINOR: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Sphere,
    Cube,
    Torus,
    Cylinder,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Sphere, Shape::Cube, Shape::Torus, Shape::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Cube => "cube",
            Shape::Torus => "torus",
            Shape::Cylinder => "cylinder",
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown shape class `{s}`")))
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Uniform samples of the noiseless surface at its native scale: the unit
/// sphere, the cube `[-1, 1]³`, a torus with radii 1 and 0.4, and a closed
/// cylinder of radius 1 spanning `z ∈ [-1, 1]`.
pub fn surface_points(shape: Shape, n: usize, rng: &mut impl Rng) -> Vec<Point> {
    (0..n).map(|_| surface_point(shape, rng)).collect()
}

fn surface_point(shape: Shape, rng: &mut impl Rng) -> Point {
    match shape {
        Shape::Sphere => {
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            loop {
                let v: Point = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if r > 1e-9 {
                    return v.map(|c| c / r);
                }
            }
        }
        Shape::Cube => {
            // all six faces have the same area
            let face = rng.random_range(0..6);
            let axis = face / 2;
            let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
            let mut p = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            p[axis] = sign;
            p
        }
        Shape::Torus => loop {
            let u = rng.random_range(0.0..2.0 * PI);
            let v = rng.random_range(0.0..2.0 * PI);
            // area element is proportional to the distance from the axis
            let ring = TORUS_MAJOR + TORUS_MINOR * v.cos();
            if rng.random::<f64>() * (TORUS_MAJOR + TORUS_MINOR) <= ring {
                return [ring * u.cos(), ring * u.sin(), TORUS_MINOR * v.sin()];
            }
        },
        Shape::Cylinder => {
            let theta = rng.random_range(0.0..2.0 * PI);
            // lateral area 4π against 2π for both caps
            if rng.random::<f64>() < 2.0 / 3.0 {
                [theta.cos(), theta.sin(), rng.random_range(-1.0..=1.0)]
            } else {
                let r = rng.random::<f64>().sqrt();
                let z = if rng.random::<bool>() { 1.0 } else { -1.0 };
                [r * theta.cos(), r * theta.sin(), z]
            }
        }
    }
}

/// A surface sample with isotropic Gaussian jitter of standard deviation
/// `noise`, scaled so the farthest point lies at distance 1 from the origin.
pub fn generate_synthetic(shape: Shape, n_points: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    if n_points == 0 {
        return Err(Error::Config("synthetic clouds need at least one point".into()));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::Config(format!("noise must be finite and non-negative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = surface_points(shape, n_points, &mut rng);
    if noise > 0.0 {
        let jitter = Normal::new(0.0, noise).expect("checked above");
        for p in &mut pts {
            for v in p.iter_mut() {
                *v += jitter.sample(&mut rng);
            }
        }
    }
    let mut cloud = PointCloud::new(pts)?;
    cloud.scale_to_unit_ball();
    Ok(cloud)
}

/// Size and makeup of a generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub shapes: Vec<Shape>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub points: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            shapes: Shape::ALL.to_vec(),
            train_per_class: 200,
            test_per_class: 50,
            points: 256,
            noise: 0.02,
            seed: 0,
        }
    }
}

/// Balanced train and test splits; labels follow the order of `spec.shapes`.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    if spec.shapes.len() < 2 {
        return Err(Error::Config("a dataset needs at least two shape classes".into()));
    }
    let names: Vec<String> = spec.shapes.iter().map(|s| s.name().to_string()).collect();
    let mut seeds = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = |per_class: usize| -> Result<Dataset> {
        let mut clouds = Vec::with_capacity(per_class * spec.shapes.len());
        for _ in 0..per_class {
            for (label, &shape) in spec.shapes.iter().enumerate() {
                let cloud = generate_synthetic(shape, spec.points, spec.noise, seeds.random())?;
                clouds.push(cloud.with_label(label));
            }
        }
        Dataset::new(clouds, names.clone())
    };
    let train = split(spec.train_per_class)?;
    let test = split(spec.test_per_class)?;
    Ok((train, test))
}

/// Uniform rotation about the z axis followed by per-point Gaussian jitter of
/// standard deviation [`AUGMENT_JITTER`].
pub fn augment(cloud: &PointCloud, seed: u64) -> PointCloud {
    augment_with(cloud, AUGMENT_JITTER, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// [`augment`] with an explicit jitter; 0 gives a pure rotation.
pub fn augment_with(cloud: &PointCloud, jitter: f64, rng: &mut impl Rng) -> PointCloud {
    let angle = rng.random_range(0.0..2.0 * PI);
    let (s, c) = angle.sin_cos();
    let mut out = cloud.clone();
    for p in out.points_mut() {
        let (x, y) = (p[0], p[1]);
        p[0] = c * x - s * y;
        p[1] = s * x + c * y;
    }
    if jitter > 0.0 {
        let normal = Normal::new(0.0, jitter).expect("positive jitter");
        for p in out.points_mut() {
            for v in p.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_points_sit_on_a_face() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in surface_points(Shape::Cube, 500, &mut rng) {
            assert!(p.iter().any(|v| (v.abs() - 1.0).abs() < 1e-12));
            assert!(p.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn torus_points_satisfy_the_implicit_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in surface_points(Shape::Torus, 500, &mut rng) {
            let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - TORUS_MAJOR;
            assert!((ring * ring + p[2] * p[2] - TORUS_MINOR * TORUS_MINOR).abs() < 1e-12);
        }
    }

    #[test]
    fn names_round_trip() {
        for s in Shape::ALL {
            assert_eq!(s.name().parse::<Shape>().unwrap(), s);
        }
        assert!(matches!("cone".parse::<Shape>(), Err(Error::Config(_))));
    }
}
