//! Two-stage mitigation of false-data injection on networked control links.
//!
//! Stage I turns a received signal into wavelet scalogram stacks, measures
//! their complexity with an optimized permutation entropy, and trains a CNN
//! to predict the complexity level online. Stage II keeps a bank of
//! forecasters, assigns one model per complexity level, and subtracts the
//! estimated attack from the received signal.

pub mod classifier;
pub mod config;
pub mod entropy;
pub mod error;
pub mod ensemble;
pub mod features;
pub mod forecasters;
pub mod imaging;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod signal;
pub mod svg;
pub mod sim;
pub mod wavelet;
pub mod workflow;

pub use error::{Error, Result};
