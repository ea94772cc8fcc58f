//! Ghost-robust navigation at desk scale: a synthetic traffic world with
//! injected ghost vehicles, a relation-learning driving network, staged
//! training, and an evaluation harness for robustness metrics.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod rng;
pub mod dataset;
pub mod sim;

pub use error::{Error, Result};
