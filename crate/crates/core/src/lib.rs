//! Mini-batch gradient descent on fixed, shuffled and sampled partitions of a
//! finite sample, with the linear-dynamic-system view of fixed-partition
//! least squares.

pub mod datagen;
pub mod dynsys;
pub mod engine;
pub mod error;
pub mod losses;
pub mod partition;
pub mod rng;
pub mod schedule;
pub mod source;
pub mod store;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/schedules.md")]
    mod schedules {}
    #[doc = include_str!("../../../book/src/stable-solution.md")]
    mod stable_solution {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/batch-store.md")]
    mod batch_store {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
