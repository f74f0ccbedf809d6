use std::rc::Rc;

use rand::Rng;

use super::layers::{ModelParams, Stage};
use super::Phase;
use crate::error::{Error, Result};
use crate::lmir::MiPair;
use crate::numerics::{BnMode, Graph, Segments};
use crate::shuffle::{her_shuffled, her_transform, Branch, ShuffleSpec};

/// One shuffled layer.
///
/// The input channels are split in half. The first half goes through the
/// shuffled transform (three linear, batch-norm, ReLU stages on coordinates
/// concatenated with features); the second half bypasses it. The output is the
/// bypassed half followed by the transformed half, so the next layer transforms
/// the channels this one left alone.
#[derive(Clone, Debug)]
pub struct PsnLayer {
    stages: Vec<Stage>,
    width: usize,
    id: usize,
    pair_rows: Option<usize>,
}

impl PsnLayer {
    /// `id` tags the feature pairs this layer emits.
    pub fn new(p: &mut ModelParams, name: &str, width: usize, id: usize, momentum: f64, eps: f64, rng: &mut impl Rng) -> Self {
        let half = width / 2;
        let stages = (0..3)
            .map(|s| {
                let input = if s == 0 { half + 3 } else { half };
                Stage::new(p, &format!("{name}.stage{s}"), input, half, momentum, eps, rng)
            })
            .collect();
        PsnLayer {
            stages,
            width,
            id,
            pair_rows: None,
        }
    }

    /// Caps the rows of each emitted pair; larger inputs keep every `⌈rows / cap⌉`-th row.
    pub fn with_pair_rows(mut self, cap: Option<usize>) -> Self {
        self.pair_rows = cap.filter(|&c| c > 0);
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    fn branch<G: Graph>(&self, g: &mut G, p: &ModelParams, x: &G::Node, mode: BnMode) -> Result<G::Node> {
        let mut h = x.clone();
        for s in &self.stages {
            h = s.forward(g, p, &h, mode)?;
        }
        Ok(h)
    }

    /// `coords` holds one row per feature row; the sample shuffle stays inside each segment.
    pub fn forward<G: Graph>(
        &self,
        g: &mut G,
        p: &ModelParams,
        features: &G::Node,
        coords: &G::Node,
        segments: &Segments,
        spec: ShuffleSpec,
        phase: &Phase<'_>,
    ) -> Result<(G::Node, Option<MiPair<G::Node>>)> {
        let (rows, d) = g.value(features).shape();
        if d != self.width || d % 2 != 0 {
            return Err(Error::Dimension {
                op: "psn_layer_forward",
                left: (rows, d),
                right: (rows, self.width),
            });
        }
        let half = d / 2;
        let active = g.slice_cols(features, 0, half)?;
        let bypass = g.slice_cols(features, half, d)?;
        let (shuffled, pair) = if phase.emits_pairs() {
            // the unshuffled pass only feeds the estimator, so it leaves the running stats alone
            let out = her_transform(g, &active, coords, segments, spec, |g, x, branch| {
                let mode = match branch {
                    Branch::Sigma => BnMode::TrainFrozen,
                    Branch::Shuffled => BnMode::Train,
                };
                self.branch(g, p, x, mode)
            })?;
            let pair = match self.pair_rows {
                Some(cap) if rows > cap => {
                    let stride = rows.div_ceil(cap);
                    let keep: Rc<[usize]> = (0..rows).step_by(stride).collect();
                    let x = g.gather_rows(&active, keep.clone())?;
                    let sigma = g.gather_rows(&out.sigma, keep.clone())?;
                    let shuffled = g.gather_rows(&out.shuffled, keep)?;
                    MiPair::new(x, sigma, shuffled, self.id)
                }
                _ => MiPair::new(active, out.sigma, out.shuffled.clone(), self.id),
            };
            (out.shuffled, Some(pair))
        } else {
            let mode = if phase.is_train() { BnMode::Train } else { BnMode::Eval };
            let out = her_shuffled(g, &active, coords, segments, spec, |g, x| self.branch(g, p, x, mode))?;
            (out, None)
        };
        Ok((g.concat_cols(&bypass, &shuffled)?, pair))
    }
}
