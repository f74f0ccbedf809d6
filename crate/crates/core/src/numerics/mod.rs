//! Dense matrices, reverse-mode differentiation, Adam and the cosine schedule.

mod graph;
pub mod kernels;
mod matrix;
mod optim;
mod params;
mod tape;

pub use graph::{Eager, Graph};
pub use kernels::{BnMode, BnStats, Segments};
pub use matrix::Matrix;
pub use optim::{adam_step, cosine_anneal_lr, AdamState};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, OpKind, Tape, TapeNode, Var};
