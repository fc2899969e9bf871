//! Langevin samplers for Gibbs densities `exp(-U)` where `U = F + G` is
//! strongly convex, `F` is smooth and `G` may be non-differentiable.
//!
//! The crate ships four transition kernels (explicit subgradient,
//! semi-implicit proximal gradient, MYULA and Metropolis-adjusted
//! explicit), the potentials used in the 2D and imaging experiments, the
//! proximal maps they need, and the diagnostics used to judge the output:
//! exact grid Wasserstein-2 distances, total variation distance of
//! histograms and streaming moments.

pub mod diagnostics;
pub mod imageio;
pub mod kernels;
pub mod operators;
pub mod potential;
pub mod potentials;
pub mod prox;
pub mod rng;

mod error;
mod state;

pub use error::{Error, Result};
pub use potential::{NonSmoothPart, PotentialModel, SmoothPart};
pub use rng::RngStream;
pub use state::State;
