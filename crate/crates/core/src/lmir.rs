//! Jensen-Shannon mutual-information estimators over per-point feature pairs.
//!
//! A [`Discriminator`] scores `(x_i, z_i)` row pairs. The DIM estimator treats
//! `(x, sigma)` as the positive pair and `(x, shuffled)` as the negative one;
//! the LMIR estimator exchanges the two roles.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamId, ParamStore};
use crate::probe;

/// Hidden width used when none is configured.
pub const DEFAULT_HIDDEN: usize = 64;

/// Two-layer per-point scorer `relu([x ⊕ z] W1 + b1) W2 + b2`, one shared weight set.
#[derive(Clone, Debug)]
pub struct Discriminator {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    x_dim: usize,
    z_dim: usize,
    hidden: usize,
}

impl Discriminator {
    /// Registers fresh parameters in `store` under `prefix`.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        x_dim: usize,
        z_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        probe::record_discriminator();
        let fan_in = x_dim + z_dim;
        Discriminator {
            w1: store.add_uniform(format!("{prefix}.w1"), fan_in, hidden, fan_in, rng),
            b1: store.add_uniform(format!("{prefix}.b1"), 1, hidden, fan_in, rng),
            w2: store.add_uniform(format!("{prefix}.w2"), hidden, 1, hidden, rng),
            b2: store.add_uniform(format!("{prefix}.b2"), 1, 1, hidden, rng),
            x_dim,
            z_dim,
            hidden,
        }
    }

    pub fn x_dim(&self) -> usize {
        self.x_dim
    }

    pub fn z_dim(&self) -> usize {
        self.z_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// Feature pair emitted by one shuffled layer during training.
#[derive(Clone, Debug)]
pub struct MiPair<N> {
    /// Layer input features.
    pub x: N,
    /// Unshuffled branch output.
    pub sigma: N,
    /// Shuffled branch output.
    pub shuffled: N,
    pub block_id: usize,
}

impl<N> MiPair<N> {
    pub fn new(x: N, sigma: N, shuffled: N, block_id: usize) -> Self {
        probe::record_mi_pair();
        MiPair {
            x,
            sigma,
            shuffled,
            block_id,
        }
    }

    /// The same pair with `sigma` and `shuffled` exchanged.
    pub fn exchanged(self) -> Self {
        MiPair {
            x: self.x,
            sigma: self.shuffled,
            shuffled: self.sigma,
            block_id: self.block_id,
        }
    }
}

/// Per-row scores `T(x_i, z_i)` as an N×1 node.
pub fn pair_scores<G: Graph>(
    g: &mut G,
    store: &ParamStore,
    t: &Discriminator,
    x: &G::Node,
    z: &G::Node,
) -> Result<G::Node> {
    let (xr, xc) = g.value(x).shape();
    let (zr, zc) = g.value(z).shape();
    if xr != zr || xc != t.x_dim || zc != t.z_dim {
        return Err(Error::Dimension {
            op: "pair_scores",
            left: (xr, xc + zc),
            right: (zr, t.x_dim + t.z_dim),
        });
    }
    let input = g.concat_cols(x, z)?;
    let w1 = g.param(store, t.w1);
    let b1 = g.param(store, t.b1);
    let w2 = g.param(store, t.w2);
    let b2 = g.param(store, t.b2);
    let h = g.matmul(&input, &w1)?;
    let h = g.add_row_bias(&h, &b1)?;
    let h = g.relu(&h);
    let s = g.matmul(&h, &w2)?;
    g.add_row_bias(&s, &b2)
}

/// `mean(−softplus(−T_pos)) − mean(softplus(T_neg))` as a 1×1 node.
fn js_bound<G: Graph>(g: &mut G, positive: &G::Node, negative: &G::Node) -> G::Node {
    let neg_pos = g.scale(positive, -1.0);
    let a = g.softplus(&neg_pos);
    let a = g.mean(&a);
    let b = g.softplus(negative);
    let b = g.mean(&b);
    let ab = g.add(&a, &b).expect("both terms are 1x1");
    g.scale(&ab, -1.0)
}

/// DIM estimate: `(x, sigma)` positive, `(x, shuffled)` negative.
pub fn dim_estimator<G: Graph>(
    g: &mut G,
    store: &ParamStore,
    t: &Discriminator,
    pair: &MiPair<G::Node>,
) -> Result<G::Node> {
    let pos = pair_scores(g, store, t, &pair.x, &pair.sigma)?;
    let neg = pair_scores(g, store, t, &pair.x, &pair.shuffled)?;
    Ok(js_bound(g, &pos, &neg))
}

/// LMIR estimate: `(x, shuffled)` positive, `(x, sigma)` negative.
pub fn lmir_estimator<G: Graph>(
    g: &mut G,
    store: &ParamStore,
    t: &Discriminator,
    pair: &MiPair<G::Node>,
) -> Result<G::Node> {
    let pos = pair_scores(g, store, t, &pair.x, &pair.shuffled)?;
    let neg = pair_scores(g, store, t, &pair.x, &pair.sigma)?;
    Ok(js_bound(g, &pos, &neg))
}

/// Arithmetic mean of per-layer estimates.
pub fn lmir_loss<G: Graph>(g: &mut G, estimates: &[G::Node]) -> Result<G::Node> {
    let (first, rest) = estimates
        .split_first()
        .ok_or_else(|| Error::Contract("lmir_loss needs at least one estimate".into()))?;
    let mut total = first.clone();
    for e in rest {
        total = g.add(&total, e)?;
    }
    Ok(g.scale(&total, 1.0 / estimates.len() as f64))
}

/// Which estimator the regularizer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Lmir,
    Dim,
}

impl Estimator {
    pub fn apply<G: Graph>(
        self,
        g: &mut G,
        store: &ParamStore,
        t: &Discriminator,
        pair: &MiPair<G::Node>,
    ) -> Result<G::Node> {
        match self {
            Estimator::Lmir => lmir_estimator(g, store, t, pair),
            Estimator::Dim => dim_estimator(g, store, t, pair),
        }
    }
}
