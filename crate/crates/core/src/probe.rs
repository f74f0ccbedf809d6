//! Per-thread construction counters for the objects that only exist while training:
//! tapes, discriminators and mutual-information pairs. Inference must leave all three at zero.

use std::cell::Cell;

thread_local! {
    static TAPES: Cell<usize> = const { Cell::new(0) };
    static DISCRIMINATORS: Cell<usize> = const { Cell::new(0) };
    static MI_PAIRS: Cell<usize> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tapes: usize,
    pub discriminators: usize,
    pub mi_pairs: usize,
}

impl std::ops::Sub for Counts {
    type Output = Counts;

    fn sub(self, rhs: Counts) -> Counts {
        Counts {
            tapes: self.tapes - rhs.tapes,
            discriminators: self.discriminators - rhs.discriminators,
            mi_pairs: self.mi_pairs - rhs.mi_pairs,
        }
    }
}

pub fn snapshot() -> Counts {
    Counts {
        tapes: TAPES.with(Cell::get),
        discriminators: DISCRIMINATORS.with(Cell::get),
        mi_pairs: MI_PAIRS.with(Cell::get),
    }
}

pub(crate) fn record_tape() {
    TAPES.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_discriminator() {
    DISCRIMINATORS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_mi_pair() {
    MI_PAIRS.with(|c| c.set(c.get() + 1));
}
