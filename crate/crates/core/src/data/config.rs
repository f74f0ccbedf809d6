//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. Every key has a default, unknown
//! keys are rejected, and [`RunConfig::to_text`] writes every key back in a
//! fixed order so a resolved run can be replayed from its own echo.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use super::synthetic::{Shape, SyntheticSpec};
use crate::error::{Error, Result};
use crate::lmir::Estimator;
use crate::model::{AttentionCoords, BlockConfig, FpsStart, ModelConfig, SamplerKind, TrainConfig};
use crate::shuffle::ShuffleSpec;

/// Every accepted key with its default, in output order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("threads", "0"),
    ("data.source", "synthetic"),
    ("data.classes", "sphere,cube,torus,cylinder"),
    ("data.train_per_class", "200"),
    ("data.test_per_class", "50"),
    ("data.points", "256"),
    ("data.noise", "0.02"),
    ("data.seed", "0"),
    ("model.widths", "32,64,128"),
    ("model.centers", "64,16"),
    ("model.group_sizes", "16,16"),
    ("model.radii", "0.25,0.5"),
    ("model.layers_per_block", "3"),
    ("model.head", "64,32"),
    ("model.dropout", "0.4"),
    ("model.attention", "point"),
    ("model.bn_momentum", "0.9"),
    ("model.bn_eps", "1e-5"),
    ("shuffle.sample_groups", "4"),
    ("shuffle.channel_groups", "4"),
    ("sampler.kind", "cluster_fps"),
    ("sampler.clusters", "4"),
    ("sampler.fps_start", "farthest"),
    ("sampler.seed", "0"),
    ("lmir.lambda", "0.1"),
    ("lmir.estimator", "lmir"),
    ("lmir.hidden", "64"),
    ("lmir.pair_rows", "2048"),
    ("train.epochs", "30"),
    ("train.batch_size", "24"),
    ("train.lr", "0.001"),
    ("train.min_lr", "0"),
    ("train.t_max", "32"),
    ("train.augment", "true"),
    ("train.jitter", "0.02"),
    ("train.point_dropout", "0.75"),
    ("train.target_accuracy", "none"),
    ("eval.points", "none"),
    ("eval.seed", "0"),
    ("bench.sizes", "1024:512,100000:10000"),
    ("bench.clusters", "16"),
    ("bench.repetitions", "5"),
    ("ablate.arms", "no_nefl,her,her_dim,her_lmir"),
    ("ablate.seeds", "5"),
    ("sample.method", "cluster_fps"),
    ("sample.count", "512"),
    ("sample.clusters", "16"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: CONFIG_KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> Result<&'static str> {
    CONFIG_KEYS
        .iter()
        .map(|&(k, _)| k)
        .find(|k| *k == key)
        .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.trim()
        .parse()
        .map_err(|e| Error::Config(format!("`{key} = {raw}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|v| parse_value(key, v)).collect()
}

impl RunConfig {
    /// Defaults overridden by the lines of `text`. A key may appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, found `{line}`", i + 1)))?;
            let key = known(k.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: `{key}` is set twice", i + 1)));
            }
            seen.push(key);
            cfg.values.insert(key, v.trim().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key in declaration order, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &(k, _) in CONFIG_KEYS {
            out.push_str(&format!("{k} = {}\n", self.values[k]));
        }
        out
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        Ok(&self.values[known(key)?])
    }

    /// Replaces one value; the whole configuration must still be valid.
    pub fn set(&mut self, key: &str, value: impl Display) -> Result<()> {
        let key = known(key)?;
        let old = self.values.insert(key, value.to_string().trim().to_string());
        if let Err(e) = self.validate() {
            self.values.insert(key, old.expect("every key has a value"));
            return Err(e);
        }
        Ok(())
    }

    fn value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        parse_value(key, self.get(key)?)
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        parse_list(key, self.get(key)?)
    }

    /// `none` reads as absent.
    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.get(key)? {
            "none" => Ok(None),
            v => parse_value(key, v).map(Some),
        }
    }

    fn bool(&self, key: &str) -> Result<bool> {
        match self.get(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(Error::Config(format!("`{key} = {v}`: expected true or false"))),
        }
    }

    /// Converts every typed view once, so bad values surface at load time.
    pub fn validate(&self) -> Result<()> {
        self.model_config()?.validate()?;
        self.train_config()?;
        self.synthetic_spec()?;
        self.threads()?;
        self.eval_points()?;
        self.value::<u64>("eval.seed")?;
        self.bench_sizes()?;
        self.value::<usize>("bench.clusters")?;
        if self.value::<usize>("bench.repetitions")? == 0 {
            return Err(Error::Config("bench.repetitions must be at least 1".into()));
        }
        self.ablate_arms()?;
        if self.value::<usize>("ablate.seeds")? == 0 {
            return Err(Error::Config("ablate.seeds must be at least 1".into()));
        }
        match self.get("sample.method")? {
            "fps" | "cluster_fps" => {}
            v => return Err(Error::Config(format!("`sample.method = {v}`: expected fps or cluster_fps"))),
        }
        self.value::<usize>("sample.count")?;
        self.value::<usize>("sample.clusters")?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.value("seed").expect("validated")
    }

    /// Sampler worker threads; 0 leaves the choice to the environment.
    pub fn threads(&self) -> Result<usize> {
        self.value("threads")
    }

    /// `None` for the synthetic task, otherwise a dataset directory.
    pub fn data_source(&self) -> Option<&str> {
        match self.get("data.source").expect("known key") {
            "synthetic" => None,
            p => Some(p),
        }
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let shapes: Vec<Shape> = self.list("data.classes")?;
        let spec = SyntheticSpec {
            shapes,
            train_per_class: self.value("data.train_per_class")?,
            test_per_class: self.value("data.test_per_class")?,
            points: self.value("data.points")?,
            noise: self.value("data.noise")?,
            seed: self.value("data.seed")?,
        };
        if spec.shapes.len() < 2 {
            return Err(Error::Config("data.classes needs at least two shapes".into()));
        }
        if spec.points == 0 || spec.train_per_class == 0 || spec.test_per_class == 0 {
            return Err(Error::Config("data.points and per-class counts must be positive".into()));
        }
        if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
            return Err(Error::Config(format!("data.noise must be non-negative, got {}", spec.noise)));
        }
        Ok(spec)
    }

    /// Model settings; the class count comes from `data.classes`.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let widths: Vec<usize> = self.list("model.widths")?;
        let centers: Vec<usize> = self.list("model.centers")?;
        let groups: Vec<usize> = self.list("model.group_sizes")?;
        let radii: Vec<f64> = self.list("model.radii")?;
        if widths.is_empty() {
            return Err(Error::Config("model.widths is empty".into()));
        }
        let sampled = widths.len() - 1;
        if centers.len() != sampled || groups.len() != sampled || radii.len() != sampled {
            return Err(Error::Config(format!(
                "model.centers, model.group_sizes and model.radii need {sampled} entries each, one per block before the last"
            )));
        }
        let mut blocks: Vec<BlockConfig> = (0..sampled)
            .map(|i| BlockConfig {
                centers: Some(centers[i]),
                group_size: groups[i],
                radius: radii[i],
                width: widths[i],
            })
            .collect();
        blocks.push(BlockConfig {
            centers: None,
            group_size: 0,
            radius: 0.0,
            width: widths[sampled],
        });
        let sampler = match self.get("sampler.kind")? {
            "fps" => SamplerKind::Fps(match self.get("sampler.fps_start")? {
                "first" => FpsStart::First,
                "farthest" => FpsStart::FarthestFromCentroid,
                v => return Err(Error::Config(format!("`sampler.fps_start = {v}`: expected first or farthest"))),
            }),
            "cluster_fps" => SamplerKind::ClusterFps {
                clusters: self.value("sampler.clusters")?,
            },
            v => return Err(Error::Config(format!("`sampler.kind = {v}`: expected fps or cluster_fps"))),
        };
        let attention = match self.get("model.attention")? {
            "point" => AttentionCoords::Point,
            "centroid" => AttentionCoords::Centroid,
            v => return Err(Error::Config(format!("`model.attention = {v}`: expected point or centroid"))),
        };
        let estimator = match self.get("lmir.estimator")? {
            "lmir" => Estimator::Lmir,
            "dim" => Estimator::Dim,
            v => return Err(Error::Config(format!("`lmir.estimator = {v}`: expected lmir or dim"))),
        };
        let classes = self.list::<Shape>("data.classes")?.len();
        let pair_rows: usize = self.value("lmir.pair_rows")?;
        let lambda: f64 = self.value("lmir.lambda")?;
        if !lambda.is_finite() {
            return Err(Error::Config("lmir.lambda must be finite".into()));
        }
        Ok(ModelConfig {
            blocks,
            layers_per_block: self.value("model.layers_per_block")?,
            head: self.list("model.head")?,
            classes,
            shuffle: ShuffleSpec::new(self.value("shuffle.sample_groups")?, self.value("shuffle.channel_groups")?)?,
            sampler,
            sampler_seed: self.value("sampler.seed")?,
            attention,
            dropout: self.value("model.dropout")?,
            bn_momentum: self.value("model.bn_momentum")?,
            bn_eps: self.value("model.bn_eps")?,
            lambda,
            estimator,
            discriminator_hidden: self.value("lmir.hidden")?,
            pair_rows: (pair_rows > 0).then_some(pair_rows),
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.value("train.epochs")?,
            batch_size: self.value("train.batch_size")?,
            learning_rate: self.value("train.lr")?,
            min_learning_rate: self.value("train.min_lr")?,
            t_max: self.value("train.t_max")?,
            seed: self.value("seed")?,
            augment: self.bool("train.augment")?,
            jitter: self.value("train.jitter")?,
            point_dropout: self.value("train.point_dropout")?,
            target_accuracy: self.optional("train.target_accuracy")?,
        };
        if cfg.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(cfg.learning_rate > 0.0) || !(cfg.min_learning_rate >= 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(cfg.jitter >= 0.0) {
            return Err(Error::Config("train.jitter must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&cfg.point_dropout) {
            return Err(Error::Config("train.point_dropout must lie in [0, 1)".into()));
        }
        Ok(cfg)
    }

    pub fn eval_points(&self) -> Result<Option<usize>> {
        self.optional("eval.points")
    }

    pub fn eval_seed(&self) -> u64 {
        self.value("eval.seed").expect("validated")
    }

    /// `(n_in, n_out)` pairs written `n_in:n_out`.
    pub fn bench_sizes(&self) -> Result<Vec<(usize, usize)>> {
        let raw = self.get("bench.sizes")?;
        raw.split(',')
            .map(|pair| {
                let (a, b) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("bench.sizes entry `{pair}` is not `n_in:n_out`")))?;
                Ok((parse_value("bench.sizes", a)?, parse_value("bench.sizes", b)?))
            })
            .collect()
    }

    pub fn bench_clusters(&self) -> usize {
        self.value("bench.clusters").expect("validated")
    }

    pub fn bench_repetitions(&self) -> usize {
        self.value("bench.repetitions").expect("validated")
    }

    pub fn ablate_arms(&self) -> Result<Vec<String>> {
        let arms: Vec<String> = self.list("ablate.arms")?;
        for a in &arms {
            if !matches!(a.as_str(), "no_nefl" | "her" | "her_dim" | "her_lmir") {
                return Err(Error::Config(format!(
                    "unknown ablation arm `{a}`; expected no_nefl, her, her_dim or her_lmir"
                )));
            }
        }
        if arms.is_empty() {
            return Err(Error::Config("ablate.arms is empty".into()));
        }
        Ok(arms)
    }

    pub fn ablate_seeds(&self) -> usize {
        self.value("ablate.seeds").expect("validated")
    }

    pub fn sample_method(&self) -> &str {
        self.get("sample.method").expect("known key")
    }

    pub fn sample_count(&self) -> usize {
        self.value("sample.count").expect("validated")
    }

    pub fn sample_clusters(&self) -> usize {
        self.value("sample.clusters").expect("validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(cfg.model_config().unwrap(), ModelConfig::default());
        assert_eq!(cfg.train_config().unwrap(), TrainConfig::default());
        assert_eq!(cfg.synthetic_spec().unwrap(), SyntheticSpec::default());
    }

    #[test]
    fn unknown_and_repeated_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("model.widht = 3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("seed = 1\nseed = 2"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("train.epochs = many"), Err(Error::Config(_))));
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = RunConfig::parse("# run\n\ntrain.epochs = 3  # short\nlmir.estimator = dim\n").unwrap();
        assert_eq!(cfg.train_config().unwrap().epochs, 3);
        assert_eq!(cfg.model_config().unwrap().estimator, Estimator::Dim);
    }

    #[test]
    fn failed_set_keeps_the_old_value() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("model.widths", "31,64,128").is_err());
        assert_eq!(cfg, RunConfig::default());
        cfg.set("seed", 9).unwrap();
        assert_eq!(cfg.seed(), 9);
    }
}
