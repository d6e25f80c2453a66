//! Asymptotic index of dispersion of thinned birth/death counts in
//! birth-death chains.
//!
//! Three independent routes to the same quantity:
//!
//! - [`dispersion`]: closed form in terms of the stationary distribution
//!   and the cumulative counted-flow distribution;
//! - [`oracle`]: exact renewal-reward moments from tridiagonal linear systems;
//! - [`sim`]: Monte Carlo simulation of the thinned chain.
//!
//! [`models`] provides named constructors for the standard queueing examples.

pub mod dispersion;
pub mod error;
pub mod model;
pub mod models;
pub mod oracle;
pub mod sim;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{BDModel, Direction};
