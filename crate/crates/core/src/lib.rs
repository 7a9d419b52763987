//! Bayesian vector autoregressions with stochastic volatility under
//! hierarchical shrinkage priors (R2D2, Dirichlet-Laplace, SSVS,
//! hierarchical Minnesota and flat).

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod dgp;
pub mod dist;
pub mod dma;
pub mod error;
pub mod forecast;
pub mod geweke;
pub mod groups;
pub mod io;
pub mod model;
pub mod pool;
pub mod priors;
pub mod quad;
pub mod sampler;
pub mod special;
pub mod sv;

pub use error::{Error, Result};
