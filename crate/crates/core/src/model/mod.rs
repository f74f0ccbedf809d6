//! The shuffled point-set classifier: encoder blocks of shuffled layers with
//! channel attention, a fully connected head, the combined objective, training,
//! evaluation and checkpoints.

mod attention;
mod checkpoint;
mod classifier;
mod encoder;
mod layers;
mod objective;
mod psn;
mod train;

pub use attention::ChannelAttention;
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, OptimizerRecord, CHECKPOINT_MAGIC,
};
pub use classifier::{Classifier, ForwardOutput};
pub use encoder::{group_points, EncoderBlock};
pub use layers::{BatchNorm, BnBank, Linear, ModelParams, Stage};
pub use objective::{total_loss, LmirHead, LossParts};
pub use psn::PsnLayer;
pub use train::{evaluate, subsample, train, Evaluation, MetricsRecord, TrainConfig, TrainOutcome, METRICS_HEADER};

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lmir::Estimator;
use crate::shuffle::ShuffleSpec;

/// Whether a forward pass is training (batch statistics, dropout) or inference.
pub enum Phase<'a> {
    /// `pairs` asks the shuffled layers for feature pairs; without it the
    /// unshuffled branch is skipped.
    Train { rng: &'a mut ChaCha8Rng, pairs: bool },
    Eval,
}

impl<'a> Phase<'a> {
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Phase::Train { rng, pairs: true }
    }

    pub fn is_train(&self) -> bool {
        matches!(self, Phase::Train { .. })
    }

    pub fn emits_pairs(&self) -> bool {
        matches!(self, Phase::Train { pairs: true, .. })
    }
}

/// Where plain farthest-point sampling starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FpsStart {
    /// Point index 0.
    First,
    /// The point farthest from the cloud centroid, lowest index on ties.
    FarthestFromCentroid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Fps(FpsStart),
    ClusterFps { clusters: usize },
}

/// Coordinate concatenated to the channel descriptor before gating.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionCoords {
    /// Each point's own coordinate.
    Point,
    /// The mean of the block's output coordinates, shared by every point of a cloud.
    Centroid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockConfig {
    /// Centers to sample; `None` groups every remaining point around the origin.
    pub centers: Option<usize>,
    pub group_size: usize,
    pub radius: f64,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub blocks: Vec<BlockConfig>,
    pub layers_per_block: usize,
    pub head: Vec<usize>,
    pub classes: usize,
    pub shuffle: ShuffleSpec,
    pub sampler: SamplerKind,
    pub sampler_seed: u64,
    pub attention: AttentionCoords,
    pub dropout: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Weight of the mutual-information term; 0 trains on cross-entropy alone.
    pub lambda: f64,
    pub estimator: Estimator,
    pub discriminator_hidden: usize,
    /// Rows per layer scored by the estimator; `None` scores every row.
    pub pair_rows: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: vec![
                BlockConfig {
                    centers: Some(64),
                    group_size: 16,
                    radius: 0.25,
                    width: 32,
                },
                BlockConfig {
                    centers: Some(16),
                    group_size: 16,
                    radius: 0.5,
                    width: 64,
                },
                BlockConfig {
                    centers: None,
                    group_size: 0,
                    radius: 0.0,
                    width: 128,
                },
            ],
            layers_per_block: 3,
            head: vec![64, 32],
            classes: 4,
            shuffle: ShuffleSpec::default(),
            sampler: SamplerKind::ClusterFps { clusters: 4 },
            sampler_seed: 0,
            attention: AttentionCoords::Point,
            dropout: 0.4,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            lambda: 0.1,
            estimator: Estimator::Lmir,
            discriminator_hidden: crate::lmir::DEFAULT_HIDDEN,
            pair_rows: Some(2048),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::Config("model needs at least one encoder block".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.layers_per_block == 0 {
            return Err(Error::Config("layers_per_block must be at least 1".into()));
        }
        let mut prev_centers: Option<usize> = None;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.width == 0 || b.width % 2 != 0 {
                return Err(Error::Config(format!("block {i} width must be even and positive, got {}", b.width)));
            }
            self.shuffle.check_width(b.width / 2)?;
            if b.width < 4 {
                return Err(Error::Config(format!("block {i} width must be at least 4")));
            }
            match b.centers {
                Some(k) => {
                    if k == 0 || b.group_size == 0 || !(b.radius > 0.0) {
                        return Err(Error::Config(format!(
                            "block {i} needs positive centers, group_size and radius"
                        )));
                    }
                    if prev_centers.is_some_and(|p| k > p) {
                        return Err(Error::Config(format!("block {i} samples more centers than its input has")));
                    }
                    if let SamplerKind::ClusterFps { clusters } = self.sampler {
                        if clusters == 0 || k % clusters != 0 {
                            return Err(Error::Divisibility {
                                what: "block centers",
                                value: k,
                                groups: clusters,
                            });
                        }
                    }
                    prev_centers = Some(k);
                }
                None => {
                    if i + 1 != self.blocks.len() {
                        return Err(Error::Config("only the last block may group all points".into()));
                    }
                }
            }
        }
        if self.blocks.last().is_some_and(|b| b.centers.is_some()) {
            return Err(Error::Config("the last block must group all remaining points".into()));
        }
        if self.head.contains(&0) {
            return Err(Error::Config("head widths must be positive".into()));
        }
        Ok(())
    }

    /// Shuffled layers in the whole encoder, which is also the number of discriminators.
    pub fn psn_layer_count(&self) -> usize {
        self.blocks.len() * self.layers_per_block
    }

    /// Smallest input cloud the sampling blocks accept.
    pub fn min_points(&self) -> usize {
        self.blocks.iter().filter_map(|b| b.centers).max().unwrap_or(1)
    }
}
