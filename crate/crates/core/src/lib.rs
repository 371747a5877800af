//! Spiking liquid state machine.
//!
//! - [`lif`]: leaky integrate-and-fire layer, scalar reference and vectorized kernel
//! - [`spike`]: spike rasters and Poisson rate encoding
//! - [`reservoir`]: 3-D liquid construction
//! - [`delay`]: synaptic delay buffer
//! - [`liquid`]: liquid simulation with delayed recurrence
//! - [`readout`]: windowed feature cubes and the convolutional readout
//! - [`semantic`]: monotone stage decoding
//! - [`data`], [`config`], [`pipeline`]: synthetic tasks and end-to-end runs
//! - [`baseline`]: logistic regression on mean input rates
//! - [`bench`]: scalar vs vectorized timing

pub mod baseline;
pub mod bench;
pub mod config;
pub mod data;
pub mod delay;
pub mod error;
pub mod lif;
pub mod liquid;
pub mod pipeline;
pub mod readout;
pub mod reservoir;
pub mod semantic;
pub mod spike;

pub use error::{Error, ErrorCategory, Result};
