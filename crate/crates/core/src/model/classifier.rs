use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoder::{BlockState, EncoderBlock};
use super::layers::{BatchNorm, Linear, ModelParams};
use super::{ModelConfig, Phase};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::lmir::MiPair;
use crate::numerics::{BnMode, Eager, Graph, Matrix};

/// Logits for a batch plus, in training, one feature pair per shuffled layer per batch.
pub struct ForwardOutput<N> {
    /// One row per input cloud.
    pub logits: N,
    pub pairs: Vec<MiPair<N>>,
}

#[derive(Clone, Debug)]
struct HeadLayer {
    linear: Linear,
    bn: BatchNorm,
}

#[derive(Clone, Debug)]
pub struct Classifier {
    config: ModelConfig,
    params: ModelParams,
    blocks: Vec<EncoderBlock>,
    head: Vec<HeadLayer>,
    output: Linear,
    input_features: usize,
}

impl Classifier {
    /// A freshly initialized model for clouds carrying `input_features` extra
    /// per-point channels beyond their coordinates.
    pub fn new(config: ModelConfig, input_features: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ModelParams::default();
        let mut blocks = Vec::with_capacity(config.blocks.len());
        let mut in_dim = input_features;
        for (i, b) in config.blocks.iter().enumerate() {
            blocks.push(EncoderBlock::new(&mut params, i, b, in_dim, &config, i * config.layers_per_block, &mut rng));
            in_dim = b.width;
        }
        let mut head = Vec::new();
        for (i, &w) in config.head.iter().enumerate() {
            head.push(HeadLayer {
                linear: Linear::new(&mut params, &format!("head{i}.lin"), in_dim, w, &mut rng),
                bn: BatchNorm::new(&mut params, &format!("head{i}.bn"), w, config.bn_momentum, config.bn_eps),
            });
            in_dim = w;
        }
        let output = Linear::new(&mut params, "logits", in_dim, config.classes, &mut rng);
        Ok(Classifier {
            config,
            params,
            blocks,
            head,
            output,
            input_features,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn blocks(&self) -> &[EncoderBlock] {
        &self.blocks
    }

    pub fn input_features(&self) -> usize {
        self.input_features
    }

    /// Learnable scalars (batch-norm running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.params.store.scalar_count()
    }

    /// Widths of the shuffled branch of every shuffled layer, in layer-id order.
    pub fn psn_half_widths(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.config().width / 2, b.layers().len()))
            .collect()
    }

    pub fn forward<G: Graph>(&self, g: &mut G, clouds: &[&PointCloud], phase: &mut Phase<'_>) -> Result<ForwardOutput<G::Node>> {
        if clouds.is_empty() {
            return Err(Error::EmptyInput("classifier batch"));
        }
        let mut features: Vec<Matrix> = Vec::new();
        for c in clouds {
            if c.feature_dim() != self.input_features {
                return Err(Error::Dimension {
                    op: "classify_forward",
                    left: (c.len(), c.feature_dim()),
                    right: (c.len(), self.input_features),
                });
            }
            if let Some(f) = c.features() {
                features.push(f.clone());
            }
        }
        let stacked = if self.input_features > 0 {
            let mut m = features[0].clone();
            for f in &features[1..] {
                m = m.concat_rows(f)?;
            }
            Some(g.constant(m))
        } else {
            None
        };
        let mut state = BlockState {
            features: stacked,
            coords: clouds.iter().map(|c| c.points().to_vec()).collect(),
        };
        let mut pairs = Vec::new();
        for block in &self.blocks {
            state = block.forward(g, &self.params, &state, &self.config, phase, &mut pairs)?;
        }
        let mut h = state.features.expect("every block emits features");
        let bn = if phase.is_train() { BnMode::Train } else { BnMode::Eval };
        for layer in &self.head {
            h = layer.linear.forward(g, &self.params, &h)?;
            h = layer.bn.forward(g, &self.params, &h, bn)?;
            h = g.relu(&h);
            if let Phase::Train { rng, .. } = phase {
                h = dropout(g, &h, self.config.dropout, rng)?;
            }
        }
        let logits = self.output.forward(g, &self.params, &h)?;
        Ok(ForwardOutput { logits, pairs })
    }

    /// Forward pass of a single cloud; the logits are 1×classes.
    pub fn classify_forward<G: Graph>(&self, g: &mut G, cloud: &PointCloud, phase: &mut Phase<'_>) -> Result<ForwardOutput<G::Node>> {
        self.forward(g, &[cloud], phase)
    }

    /// Inference logits, one row per cloud. No tape, no feature pairs.
    pub fn logits(&self, clouds: &[&PointCloud]) -> Result<Matrix> {
        let mut g = Eager::new();
        let out = self.forward(&mut g, clouds, &mut Phase::Eval)?;
        Ok(g.value(&out.logits).clone())
    }

    /// Predicted class per cloud, evaluated in fixed-size batches.
    pub fn predict(&self, clouds: &[PointCloud]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(clouds.len());
        for chunk in clouds.chunks(32) {
            let refs: Vec<&PointCloud> = chunk.iter().collect();
            let logits = self.logits(&refs)?;
            for r in 0..logits.rows() {
                let row = logits.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }
}

/// Inverted dropout through a constant mask.
fn dropout<G: Graph>(g: &mut G, x: &G::Node, rate: f64, rng: &mut ChaCha8Rng) -> Result<G::Node> {
    if rate == 0.0 {
        return Ok(x.clone());
    }
    let (r, c) = g.value(x).shape();
    let keep = 1.0 / (1.0 - rate);
    let mask = Matrix::from_fn(r, c, |_, _| if rng.random::<f64>() < rate { 0.0 } else { keep });
    let mask = g.constant(mask);
    g.mul(x, &mask)
}
