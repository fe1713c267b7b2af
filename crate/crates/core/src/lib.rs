//! Anomaly-aware time-series forecasting with a weighted contrastive
//! training objective (WECA).
//!
//! The crate is organized around a small reverse-mode autodiff engine
//! ([`diffcore`]), synthetic ATM-like data generation ([`datagen`]),
//! a parametric anomaly-injection procedure ([`anomaly`]), a causal
//! dilated-convolution forecaster ([`model`]), the contrastive and
//! forecasting objectives ([`losses`]), the training regimes
//! ([`trainer`]), SMAPE evaluation with normal/anomaly-affected test
//! splits ([`eval`]), and a multi-seed benchmark driver ([`bench`]).

pub mod anomaly;
pub mod bench;
pub mod config;
pub mod datagen;
pub mod date;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod logging;
pub mod losses;
pub mod model;
pub mod rng;
pub mod svg;
pub mod trainer;

pub use diffcore::{Tape, Tensor, ValueId};
pub use error::{Error, Result};
