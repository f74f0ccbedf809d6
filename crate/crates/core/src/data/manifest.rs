use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::io::{cloud_files, load_cloud, save_cloud};
use super::Dataset;
use crate::error::{Error, Result};

/// Files of an on-disk dataset laid out as `root/{train,test}/<class>/<cloud>.{xyz,bin}`.
///
/// Classes are the sorted subdirectory names of `train`; `test` may omit a class
/// but may not add one.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub class_names: Vec<String>,
    /// `(path, label)` in label-then-name order.
    pub train: Vec<(PathBuf, usize)>,
    pub test: Vec<(PathBuf, usize)>,
    /// Points in the smallest cloud, filled in by [`DatasetManifest::load`].
    pub points_per_cloud: Option<usize>,
    pub seed: Option<u64>,
}

fn class_dirs(split: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(split)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

impl DatasetManifest {
    pub fn scan(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let train_dir = root.join("train");
        let test_dir = root.join("test");
        for d in [&train_dir, &test_dir] {
            if !d.is_dir() {
                return Err(Error::Format(format!("dataset split {} is not a directory", d.display())));
            }
        }
        let class_names = class_dirs(&train_dir)?;
        if class_names.is_empty() {
            return Err(Error::Format(format!("{} holds no class directories", train_dir.display())));
        }
        let list = |dir: &Path| -> Result<Vec<(PathBuf, usize)>> {
            let mut out = Vec::new();
            for name in class_dirs(dir)? {
                let label = class_names
                    .iter()
                    .position(|c| *c == name)
                    .ok_or_else(|| Error::Format(format!("class `{name}` in {} is absent from train", dir.display())))?;
                out.extend(cloud_files(&dir.join(&name))?.into_iter().map(|p| (p, label)));
            }
            out.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
            Ok(out)
        };
        let train = list(&train_dir)?;
        let test = list(&test_dir)?;
        if train.is_empty() {
            return Err(Error::Format(format!("{} holds no cloud files", train_dir.display())));
        }
        Ok(DatasetManifest {
            root,
            class_names,
            train,
            test,
            points_per_cloud: None,
            seed: None,
        })
    }

    /// Parses every listed file; any failure names the file.
    pub fn load(&mut self) -> Result<(Dataset, Dataset)> {
        let read = |files: &[(PathBuf, usize)]| -> Result<Dataset> {
            let clouds = files
                .iter()
                .map(|(p, l)| load_cloud(p).map(|c| c.with_label(*l)))
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(clouds, self.class_names.clone())
        };
        let train = read(&self.train)?;
        let test = read(&self.test)?;
        let dims: Vec<usize> = train.clouds().iter().chain(test.clouds()).map(|c| c.feature_dim()).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Format("clouds disagree on their feature width".into()));
        }
        self.points_per_cloud = Some(train.min_points().min(if test.is_empty() { usize::MAX } else { test.min_points() }));
        Ok((train, test))
    }
}

/// Writes both splits in the layout [`DatasetManifest::scan`] reads, as `.xyz`.
pub fn write_dataset(train: &Dataset, test: &Dataset, root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    for (split, data) in [("train", train), ("test", test)] {
        for name in data.class_names() {
            fs::create_dir_all(root.join(split).join(name))?;
        }
        for (i, c) in data.clouds().iter().enumerate() {
            let name = &data.class_names()[c.label().expect("labelled")];
            save_cloud(c, root.join(split).join(name).join(format!("{i:06}.xyz")))?;
        }
    }
    DatasetManifest::scan(root)
}

/// SHA-256 over class names, labels, coordinates and features, as hex.
pub fn dataset_checksum(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for n in data.class_names() {
        h.update((n.len() as u64).to_le_bytes());
        h.update(n.as_bytes());
    }
    for c in data.clouds() {
        h.update((c.label().unwrap_or(usize::MAX) as u64).to_le_bytes());
        h.update((c.len() as u64).to_le_bytes());
        h.update((c.feature_dim() as u64).to_le_bytes());
        for p in c.points() {
            for v in p {
                h.update(v.to_le_bytes());
            }
        }
        if let Some(f) = c.features() {
            for v in f.data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
