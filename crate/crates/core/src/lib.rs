//! Reconstruction of Biot poroelastic parameters from harmonic displacement
//! and pressure fields.
//!
//! A spectral forward solver synthesizes fields in a focal window, the
//! derivatives of those fields are folded into per-component Gram matrices,
//! and a multi-region MLP with per-output scale factors is trained against the
//! Biot residuals under a selectable loss balancing strategy.
//!
//! The numerical modules are generic over [`scalar::Scalar`]. Training, IO
//! and the experiment drivers use `f64`; the aliases below name the concrete
//! types.

pub mod error;
pub mod scalar;
pub mod biot;
pub mod spectral;
pub mod fields;
pub mod residual;
pub mod network;
pub mod balancing;
pub mod trainer;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod reports;

pub use balancing::Strategy;
pub use biot::Unknown;
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use trainer::{train, BalanceOptions, NetworkOptions, RegionData, TrainOptions, TrainTrace};

pub type Real = f64;
pub type Params = biot::PoroelasticParams<f64>;
pub type Frequency = biot::FrequencySpec<f64>;
pub type Grid = spectral::GridSpec<f64>;
pub type Window = spectral::WindowSpec<f64>;
pub type Field = spectral::FocalField<f64>;
pub type Bundle = fields::DerivativeBundle<f64>;
pub type Gram = residual::GramCache<f64>;
pub type Network = network::ScaledMlp<f64>;
