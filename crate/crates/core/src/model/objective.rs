use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::classifier::Classifier;
use crate::error::{Error, Result};
use crate::lmir::{lmir_loss, Discriminator, Estimator, MiPair};
use crate::numerics::{Graph, ParamStore};

/// Training-only discriminators, one per shuffled layer, with their own parameters.
#[derive(Clone, Debug)]
pub struct LmirHead {
    pub store: ParamStore,
    discriminators: Vec<Discriminator>,
    estimator: Estimator,
}

impl LmirHead {
    pub fn new(model: &Classifier, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let hidden = model.config().discriminator_hidden;
        let discriminators = model
            .psn_half_widths()
            .into_iter()
            .enumerate()
            .map(|(i, w)| Discriminator::new(&mut store, &format!("lmir.layer{i}"), w, w, hidden, &mut rng))
            .collect();
        LmirHead {
            store,
            discriminators,
            estimator: model.config().estimator,
        }
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn discriminators(&self) -> &[Discriminator] {
        &self.discriminators
    }
}

pub struct LossParts<N> {
    pub total: N,
    pub cross_entropy: f64,
    /// Layer-averaged estimate, when one was computed.
    pub mutual_information: Option<f64>,
}

/// `CE − λ · mean_l Ĩ_l`: minimizing it maximizes the averaged estimate.
pub fn total_loss<G: Graph>(
    g: &mut G,
    logits: &G::Node,
    labels: &[usize],
    pairs: &[MiPair<G::Node>],
    head: Option<&LmirHead>,
    lambda: f64,
) -> Result<LossParts<G::Node>> {
    let ce = g.softmax_cross_entropy(logits, labels)?;
    let cross_entropy = g.value(&ce).item();
    if lambda == 0.0 || pairs.is_empty() {
        return Ok(LossParts {
            total: ce,
            cross_entropy,
            mutual_information: None,
        });
    }
    let head = head.ok_or_else(|| Error::Config("a nonzero lambda needs discriminators".into()))?;
    let mut estimates = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let t = head
            .discriminators
            .get(pair.block_id)
            .ok_or_else(|| Error::Config(format!("no discriminator for layer {}", pair.block_id)))?;
        estimates.push(head.estimator.apply(g, &head.store, t, pair)?);
    }
    let mi = lmir_loss(g, &estimates)?;
    let mutual_information = Some(g.value(&mi).item());
    let weighted = g.scale(&mi, -lambda);
    let total = g.add(&ce, &weighted)?;
    Ok(LossParts {
        total,
        cross_entropy,
        mutual_information,
    })
}
