//! Mask-guided latent attribute editing on procedurally generated faces.

#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod nets;
pub mod objective;
pub mod optim;
pub mod rfcover;
pub mod store;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
