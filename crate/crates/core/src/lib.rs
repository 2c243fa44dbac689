//! Neural-assisted inter-slice radio resource partitioning.
//!
//! A synthetic multi-cell simulator produces slice KPIs, a small
//! feed-forward estimator learns per-slice QoS satisfaction from local
//! observations, and a per-cell primal-dual projected-gradient optimizer
//! splits each cell's resources across its slices.

pub mod dataset;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod netsim;
pub mod optimizer;
pub mod schemes;

pub use error::{Error, Result};
