//! Labelled datasets, the synthetic shape task, file formats and run configuration.

mod config;
mod io;
mod manifest;
mod synthetic;

pub use config::{RunConfig, CONFIG_KEYS};
pub use io::{
    decode_bin, encode_bin, format_xyz, load_bin, load_cloud, load_xyz, parse_xyz, save_bin, save_cloud, save_xyz,
    BINARY_MAGIC,
};
pub use manifest::{dataset_checksum, write_dataset, DatasetManifest};
pub use synthetic::{
    augment, augment_with, generate_synthetic, surface_points, synthetic_dataset, Shape, SyntheticSpec, AUGMENT_JITTER,
};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Labelled clouds and the names of their classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    clouds: Vec<PointCloud>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Every cloud must carry a label below `class_names.len()`.
    pub fn new(clouds: Vec<PointCloud>, class_names: Vec<String>) -> Result<Self> {
        for (i, c) in clouds.iter().enumerate() {
            match c.label() {
                Some(l) if l < class_names.len() => {}
                Some(label) => {
                    return Err(Error::Label {
                        label,
                        classes: class_names.len(),
                    })
                }
                None => return Err(Error::Format(format!("cloud {i} has no label"))),
            }
        }
        Ok(Dataset { clouds, class_names })
    }

    pub fn clouds(&self) -> &[PointCloud] {
        &self.clouds
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|c| c.label().expect("checked at construction")).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes()];
        for l in self.labels() {
            counts[l] += 1;
        }
        counts
    }

    /// Extra per-point channels, taken from the first cloud.
    pub fn feature_dim(&self) -> usize {
        self.clouds.first().map_or(0, |c| c.feature_dim())
    }

    /// Fewest points in any cloud.
    pub fn min_points(&self) -> usize {
        self.clouds.iter().map(|c| c.len()).min().unwrap_or(0)
    }
}
