//! Peer-effect estimation on networks with latent homophily.
//!
//! Latent positions are recovered from the observed graph by adjacency
//! spectral embedding and used as controls in the outcome regression. The
//! embedding error is propagated into a corrected least-squares estimator.

pub mod counterfact;
pub mod embed;
pub mod error;
pub mod graph;
pub mod kmeans;
pub mod linalg;
pub mod mecov;
pub mod netgen;
pub mod peerlm;
pub mod pipeline;
pub mod rng;
pub mod simlab;
pub mod tcdata;

pub use error::{Error, ErrorKind, Result};
