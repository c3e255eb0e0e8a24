//! Universal discrete filtering of noisy symbol sequences.
//!
//! A noise-free sequence `X^n` passes through a discrete memoryless channel
//! and is observed as `Z^n`. The filters in this crate estimate each `X_t`
//! from the noisy observations with a fixed delay or lookahead, driven by a
//! sequential probability assignment (SPA) over the noisy alphabet. The
//! LZ78-based SPA in [`lz78`] makes the filters universal; the hidden Markov
//! baselines in [`hmm`] give the Bayes-optimal reference, and [`bounds`]
//! evaluates the excess-loss and information-theoretic bounds that tie the
//! two together.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the experiment harness live in the `udfilt` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod channel;
pub mod enumerate;
mod error;
pub mod filters;
pub mod hmm;
pub mod linalg;
pub mod lz78;
pub mod math;
pub mod rng;
pub mod spa;
pub mod types;
pub mod wiener;

pub use channel::ChannelMatrix;
pub use error::{Error, Result};
pub use filters::{FilterMode, FilterOutput};
pub use hmm::HmmModel;
pub use lz78::{Lz78Spa, Lz78Tree};
pub use spa::Spa;
pub use types::{Alphabet, LossMatrix, Pmf, ScoreVector, SymbolSequence};
