pub mod data;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod lmir;
pub mod model;
pub mod numerics;
pub mod probe;
pub mod shuffle;

pub use error::{Error, Result};

// The guide's listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/shuffles.md")]
    mod shuffles {}
    #[doc = include_str!("../../../book/src/regularizer.md")]
    mod regularizer {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
