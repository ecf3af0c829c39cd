//! Station-based mobility-on-demand fleet control.
//!
//! Demand per station pair is forecast with Gaussian processes; forecast
//! quantiles feed a receding-horizon integer program that decides empty
//! vehicle rebalancing; waiting requests are matched to idle vehicles with
//! the Hungarian algorithm. A time-stepped simulator compares the
//! chance-constrained controller with oracle, fixed-demand and purely
//! reactive baselines.

pub mod dispatch;
pub mod error;
pub mod forecast;
pub mod network;
pub mod optimizer;
pub mod sim;

pub use error::{Error, Result};
