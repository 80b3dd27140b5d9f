//! Mode-optimized spatial-demultiplexing imaging toolkit.
//!
//! Computes classical and quantum Cramér–Rao bounds for passive incoherent
//! imaging of extended sources, optimizes orthonormal measurement mode sets
//! over the Stiefel manifold to minimize those bounds, and validates the
//! resulting designs with seeded Poisson photon-count simulations and
//! non-negative least-squares reconstruction, including a fully adaptive
//! measurement loop that needs no prior knowledge of the source.

pub mod adaptive;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fisher;
pub mod grid;
pub mod modes;
pub mod plot;
pub mod psf;
pub mod quantum;
pub mod report;
pub mod sim;
pub mod source;
pub mod stiefel;

pub use error::{Error, Result};
