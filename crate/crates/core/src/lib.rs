//! Optimal liquidation with passive limit orders.
//!
//! A trader sells `q0` unit bunches before a horizon `T` by resting a single
//! ask at premium `delta` over a drifted Brownian reference price; the ask is
//! hit with intensity `A exp(-k delta)`. Under CARA utility the value function
//! reduces to a triangular linear ODE system whose solution gives the optimal
//! premium in closed form.
//!
//! - [`model`]: parameters, coefficients and the quote formula.
//! - [`ode`]: three solvers for the ODE system, selectable by name.
//! - [`closed_forms`]: special-case formulas (long horizon, no price risk,
//!   risk neutrality, large liquidation cost).
//! - [`simulator`]: Monte Carlo of the controlled execution process.
//! - [`market_data`]: trade tape ingestion and parameter calibration.
//! - [`backtester`]: replay of the discrete quoting protocol on a tape.
//! - [`sweep`]: initial quotes as one parameter varies.
//! - [`config`], [`export`]: run configuration and file formats.

pub mod backtester;
pub mod closed_forms;
pub mod config;
pub mod error;
pub mod export;
pub mod market_data;
pub mod model;
pub mod ode;
pub mod simulator;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{derive_coefficients, hjb_residual, quote_from_w, DerivedCoefficients, ModelParams, QuoteSurface};
pub use ode::{quote_surface, WGrid};
