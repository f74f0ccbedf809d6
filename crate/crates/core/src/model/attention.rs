use std::rc::Rc;

use rand::Rng;

use super::layers::{Linear, ModelParams};
use crate::error::Result;
use crate::numerics::{Graph, Segments};

/// Channel gating between blocks.
///
/// The descriptor is the column-wise max over a cloud's rows. Each row gates its
/// features with `sigmoid(MLP(descriptor ⊕ coordinate))`, the MLP being
/// `(D + 3) → D/4 → D` with a ReLU in between.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    squeeze: Linear,
    excite: Linear,
}

impl ChannelAttention {
    pub fn new(p: &mut ModelParams, name: &str, width: usize, rng: &mut impl Rng) -> Self {
        let hidden = (width / 4).max(1);
        ChannelAttention {
            squeeze: Linear::new(p, &format!("{name}.squeeze"), width + 3, hidden, rng),
            excite: Linear::new(p, &format!("{name}.excite"), hidden, width, rng),
        }
    }

    /// `clouds` splits the rows of `features` by cloud; `coords` has one row per feature row.
    pub fn forward<G: Graph>(
        &self,
        g: &mut G,
        p: &ModelParams,
        features: &G::Node,
        coords: &G::Node,
        clouds: &Segments,
    ) -> Result<G::Node> {
        let descriptor = g.segment_max(features, clouds)?;
        let spread: Rc<[usize]> = clouds
            .iter()
            .enumerate()
            .flat_map(|(b, r)| std::iter::repeat_n(b, r.len()))
            .collect();
        let spread = g.gather_rows(&descriptor, spread)?;
        let input = g.concat_cols(&spread, coords)?;
        let h = self.squeeze.forward(g, p, &input)?;
        let h = g.relu(&h);
        let gate = self.excite.forward(g, p, &h)?;
        let gate = g.sigmoid(&gate);
        g.mul(features, &gate)
    }

    pub fn linears(&self) -> [&Linear; 2] {
        [&self.squeeze, &self.excite]
    }
}
