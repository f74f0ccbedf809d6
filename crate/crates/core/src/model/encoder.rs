use std::rc::Rc;

use rand::Rng;

use super::attention::ChannelAttention;
use super::layers::{ModelParams, Stage};
use super::psn::PsnLayer;
use super::{AttentionCoords, BlockConfig, FpsStart, ModelConfig, Phase, SamplerKind};
use crate::error::{Error, Result};
use crate::geometry::{dist2, fps, knn_points, ClusterFps, Point, PointCloud};
use crate::lmir::MiPair;
use crate::numerics::{BnMode, Graph, Matrix, Segments};

/// Per-cloud coordinates plus the features of every point, stacked cloud after cloud.
pub(crate) struct BlockState<N> {
    pub features: Option<N>,
    pub coords: Vec<Vec<Point>>,
}

/// Groups of the `size` nearest points within `radius` of each center, nearest
/// first with ties to the lower index. Short groups repeat their nearest member.
///
/// Ordering members by distance rather than by index keeps the groups, and so
/// the shuffles applied to them, independent of how the input is ordered.
pub fn group_points(points: &[Point], centers: &[usize], radius: f64, size: usize) -> Result<Vec<Vec<usize>>> {
    let queries: Vec<Point> = centers.iter().map(|&c| points[c]).collect();
    let k = size.min(points.len());
    let near = knn_points(&queries, points, k)?;
    let r2 = radius * radius;
    Ok(near
        .into_iter()
        .zip(&queries)
        .zip(centers)
        .map(|((cand, q), &c)| {
            let mut g: Vec<usize> = cand.into_iter().filter(|&i| dist2(q, &points[i]) <= r2).collect();
            if g.is_empty() {
                g.push(c);
            }
            let first = g[0];
            g.resize(size, first);
            g
        })
        .collect())
}

fn sample_centers(points: &[Point], k: usize, sampler: SamplerKind, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if k > n {
        return Err(Error::Cardinality(format!(
            "block samples {k} centers but the cloud has only {n} points"
        )));
    }
    let cloud = PointCloud::new(points.to_vec())?;
    match sampler {
        SamplerKind::Fps(start) => {
            let s = match start {
                FpsStart::First => 0,
                FpsStart::FarthestFromCentroid => {
                    let c = cloud.centroid();
                    let mut best = 0;
                    for i in 1..n {
                        if dist2(&points[i], &c) > dist2(&points[best], &c) {
                            best = i;
                        }
                    }
                    best
                }
            };
            Ok(fps(&cloud, k, s)?.indices)
        }
        SamplerKind::ClusterFps { clusters } => {
            let cfg = ClusterFps::new(clusters, seed).with_workers(1);
            match cfg.sample(&cloud, k) {
                Err(Error::Cardinality(_)) => Ok(cfg.with_neighbors(n).sample(&cloud, k)?.indices),
                other => Ok(other?.indices),
            }
        }
    }
}

/// Sampling, grouping, a stem stage, shuffled layers, max pooling and channel attention.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    cfg: BlockConfig,
    in_dim: usize,
    stem: Stage,
    layers: Vec<PsnLayer>,
    attention: ChannelAttention,
}

impl EncoderBlock {
    /// `first_layer_id` numbers this block's shuffled layers consecutively from there.
    pub fn new(
        p: &mut ModelParams,
        index: usize,
        cfg: &BlockConfig,
        in_dim: usize,
        model: &ModelConfig,
        first_layer_id: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let name = format!("block{index}");
        let (m, e) = (model.bn_momentum, model.bn_eps);
        let stem = Stage::new(p, &format!("{name}.stem"), in_dim + 3, cfg.width, m, e, rng);
        let layers = (0..model.layers_per_block)
            .map(|l| {
                PsnLayer::new(p, &format!("{name}.psn{l}"), cfg.width, first_layer_id + l, m, e, rng)
                    .with_pair_rows(model.pair_rows)
            })
            .collect();
        let attention = ChannelAttention::new(p, &format!("{name}.attention"), cfg.width, rng);
        EncoderBlock {
            cfg: cfg.clone(),
            in_dim,
            stem,
            layers,
            attention,
        }
    }

    pub fn config(&self) -> &BlockConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[PsnLayer] {
        &self.layers
    }

    /// Centers and member lists of one cloud.
    fn plan(&self, points: &[Point], model: &ModelConfig) -> Result<(Option<Vec<usize>>, Vec<Vec<usize>>)> {
        match self.cfg.centers {
            Some(k) => {
                let centers = sample_centers(points, k, model.sampler, model.sampler_seed)?;
                let groups = group_points(points, &centers, self.cfg.radius, self.cfg.group_size)?;
                Ok((Some(centers), groups))
            }
            None => Ok((None, vec![(0..points.len()).collect()])),
        }
    }

    pub(crate) fn forward<G: Graph>(
        &self,
        g: &mut G,
        p: &ModelParams,
        input: &BlockState<G::Node>,
        model: &ModelConfig,
        phase: &Phase<'_>,
        pairs: &mut Vec<MiPair<G::Node>>,
    ) -> Result<BlockState<G::Node>> {
        if let Some(f) = &input.features {
            let d = g.value(f).cols();
            if d != self.in_dim {
                return Err(Error::Dimension {
                    op: "encoder_block",
                    left: g.value(f).shape(),
                    right: (g.value(f).rows(), self.in_dim),
                });
            }
        }
        let mut gather = Vec::new();
        let mut rel = Vec::new();
        let mut group_lengths = Vec::new();
        let mut per_cloud = Vec::new();
        let mut out_coords = Vec::with_capacity(input.coords.len());
        let mut offset = 0;
        for pts in &input.coords {
            let (centers, groups) = self.plan(pts, model)?;
            let origins: Vec<Point> = match &centers {
                Some(c) => c.iter().map(|&i| pts[i]).collect(),
                None => vec![[0.0; 3]],
            };
            for (members, o) in groups.iter().zip(&origins) {
                for &m in members {
                    gather.push(offset + m);
                    let q = pts[m];
                    rel.push([q[0] - o[0], q[1] - o[1], q[2] - o[2]]);
                }
                group_lengths.push(members.len());
            }
            per_cloud.push(origins.len());
            out_coords.push(origins);
            offset += pts.len();
        }
        let rows = rel.len();
        let rel = g.constant(Matrix::from_fn(rows, 3, |r, c| rel[r][c]));
        let x = match &input.features {
            Some(f) => {
                let grouped = g.gather_rows(f, Rc::from(gather))?;
                g.concat_cols(&rel, &grouped)?
            }
            None => rel.clone(),
        };
        let bn = if phase.is_train() { BnMode::Train } else { BnMode::Eval };
        let mut h = self.stem.forward(g, p, &x, bn)?;
        let groups = Segments::from_lengths(&group_lengths);
        for layer in &self.layers {
            let (next, pair) = layer.forward(g, p, &h, &rel, &groups, model.shuffle, phase)?;
            h = next;
            pairs.extend(pair);
        }
        let pooled = g.segment_max(&h, &groups)?;
        let clouds = Segments::from_lengths(&per_cloud);
        let gate_coords: Vec<Point> = match model.attention {
            AttentionCoords::Point => out_coords.iter().flatten().copied().collect(),
            AttentionCoords::Centroid => out_coords
                .iter()
                .flat_map(|c| {
                    let n = c.len() as f64;
                    let mut m = [0.0; 3];
                    for q in c {
                        for k in 0..3 {
                            m[k] += q[k] / n;
                        }
                    }
                    std::iter::repeat_n(m, c.len())
                })
                .collect(),
        };
        let gate_coords = g.constant(Matrix::from_fn(gate_coords.len(), 3, |r, c| gate_coords[r][c]));
        let out = self.attention.forward(g, p, &pooled, &gate_coords, &clouds)?;
        Ok(BlockState {
            features: Some(out),
            coords: out_coords,
        })
    }
}
