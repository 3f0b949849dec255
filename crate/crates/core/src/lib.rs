//! Round-based purchase-policy learning.
//!
//! The crate models one player's per-round weapon purchase as a short
//! sequence of atomic actions, encodes the round state with hierarchical
//! attention, decodes one masked sequence per weapon category behind
//! binary gates, trains with self-critical policy gradients and adapts
//! to individual players with a Reptile-style meta-learning loop.

pub mod autodiff;
pub mod baseline;
pub mod catalog;
pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod model;
pub mod sequence;
pub mod state;
pub mod training;

pub use error::{Error, Result};
