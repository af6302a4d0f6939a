//! MCS detection from raw baseband I/Q and indoor localization against a
//! per-tile MCS map.
//!
//! The pipeline has two halves. The first synthesizes labeled uplink
//! recordings ([`phy`], [`dataset`]) and trains a dilated residual
//! convolutional classifier on them ([`tcn`], [`optim`]). The second builds
//! a grid map of MCS statistics for a room and locates a transmitter by
//! matching detected MCS values against it ([`locmap`]). [`eval`] holds the
//! confusion-matrix tooling shared by both.
//!
//! Numeric code in [`tcn`] and [`optim`] is generic over [`Scalar`]; the
//! aliases below fix the precision used in practice.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod locmap;
pub mod mcs;
pub mod optim;
pub mod phy;
pub mod scalar;
pub mod seed;
pub mod tcn;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision network used for training and inference.
pub type Network32 = tcn::Network<f32>;
/// Double-precision network, used for gradient checks.
pub type Network64 = tcn::Network<f64>;
/// Single-precision AdamW optimizer state.
pub type AdamW32 = optim::AdamW<f32>;
/// Double-precision AdamW optimizer state.
pub type AdamW64 = optim::AdamW<f64>;
/// Classifier input window in training precision.
pub type Window32 = dataset::ExampleWindow<f32>;
