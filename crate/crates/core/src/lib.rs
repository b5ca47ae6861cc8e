//! Core library of the `climem` monthly climate emulator.
//!
//! The crate is organized bottom-up: a small dense-tensor engine with
//! reverse-mode differentiation ([`tensor`]), spherical harmonic transforms
//! ([`sht`]), learned spectral layers ([`spectral`]) and conditioning
//! components ([`conditioning`]) that assemble into the encoder / decoder /
//! predictor networks ([`networks`]). On top of those sit the latent
//! diffusion machinery ([`diffusion`]), the synthetic data pipeline
//! ([`data`]), joint training ([`training`]), autoregressive ensemble
//! inference ([`rollout`]) and the analysis toolkit ([`diagnostics`]).

pub mod conditioning;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod layers;
pub mod networks;
pub mod params;
pub mod rng;
pub mod rollout;
pub mod sht;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use tensor::Tensor;
