pub mod certificates;
pub mod closed_loop;
pub mod equilibria;
pub mod error;
pub mod linearize;
pub mod matrixlab;
pub mod model;
pub mod poly;
pub mod random;
mod serde_util;
pub mod simulate;
pub mod transfer;

pub use error::{Error, ModelErrorCode, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/transfer.md")]
    mod transfer {}
    #[doc = include_str!("../../../book/src/equilibria.md")]
    mod equilibria {}
    #[doc = include_str!("../../../book/src/certificates.md")]
    mod certificates {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
