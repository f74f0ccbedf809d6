use std::cell::RefCell;

use rand::Rng;

use crate::error::Result;
use crate::numerics::{BnMode, BnStats, Graph, Matrix, ParamId, ParamStore};

/// Batch-norm running statistics, kept apart from the learnable tensors.
#[derive(Debug, Default)]
pub struct BnBank {
    names: Vec<String>,
    stats: Vec<RefCell<BnStats>>,
}

impl BnBank {
    pub fn add(&mut self, name: String, stats: BnStats) -> usize {
        self.names.push(name);
        self.stats.push(RefCell::new(stats));
        self.stats.len() - 1
    }

    pub fn len(&self) -> usize {
        self.stats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn get(&self, slot: usize) -> BnStats {
        self.stats[slot].borrow().clone()
    }

    pub fn set(&self, slot: usize, stats: BnStats) {
        *self.stats[slot].borrow_mut() = stats;
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl Clone for BnBank {
    fn clone(&self) -> Self {
        BnBank {
            names: self.names.clone(),
            stats: self.stats.iter().map(|s| RefCell::new(s.borrow().clone())).collect(),
        }
    }
}

/// Learnable tensors plus batch-norm statistics of one model.
#[derive(Clone, Debug, Default)]
pub struct ModelParams {
    pub store: ParamStore,
    pub bn: BnBank,
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new(p: &mut ModelParams, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: p.store.add_uniform(format!("{name}.w"), input, output, input, rng),
            b: p.store.add_uniform(format!("{name}.b"), 1, output, input, rng),
        }
    }

    pub fn forward<G: Graph>(&self, g: &mut G, p: &ModelParams, x: &G::Node) -> Result<G::Node> {
        let w = g.param(&p.store, self.w);
        let b = g.param(&p.store, self.b);
        let y = g.matmul(x, &w)?;
        g.add_row_bias(&y, &b)
    }

    pub fn weight(&self) -> ParamId {
        self.w
    }

    pub fn bias(&self) -> ParamId {
        self.b
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    gamma: ParamId,
    beta: ParamId,
    slot: usize,
}

impl BatchNorm {
    pub fn new(p: &mut ModelParams, name: &str, dim: usize, momentum: f64, eps: f64) -> Self {
        BatchNorm {
            gamma: p.store.add(format!("{name}.gamma"), Matrix::filled(1, dim, 1.0)),
            beta: p.store.add(format!("{name}.beta"), Matrix::zeros(1, dim)),
            slot: p.bn.add(name.to_string(), BnStats::new(dim, momentum, eps)),
        }
    }

    pub fn forward<G: Graph>(&self, g: &mut G, p: &ModelParams, x: &G::Node, mode: BnMode) -> Result<G::Node> {
        let gamma = g.param(&p.store, self.gamma);
        let beta = g.param(&p.store, self.beta);
        let mut stats = p.bn.stats[self.slot].borrow_mut();
        g.batch_norm(x, &gamma, &beta, &mut stats, mode)
    }
}

/// Linear, batch norm, ReLU.
#[derive(Clone, Debug)]
pub struct Stage {
    linear: Linear,
    bn: BatchNorm,
}

impl Stage {
    pub fn new(p: &mut ModelParams, name: &str, input: usize, output: usize, momentum: f64, eps: f64, rng: &mut impl Rng) -> Self {
        Stage {
            linear: Linear::new(p, &format!("{name}.lin"), input, output, rng),
            bn: BatchNorm::new(p, &format!("{name}.bn"), output, momentum, eps),
        }
    }

    pub fn forward<G: Graph>(&self, g: &mut G, p: &ModelParams, x: &G::Node, mode: BnMode) -> Result<G::Node> {
        let y = self.linear.forward(g, p, x)?;
        let y = self.bn.forward(g, p, &y, mode)?;
        Ok(g.relu(&y))
    }
}
