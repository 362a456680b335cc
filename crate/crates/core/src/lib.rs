//! Simulation and learning toolkit for sensing-aided mmWave drone beam selection.
//!
//! The crate models a basestation with a uniform linear array serving a flying
//! drone: it builds oversampled beam codebooks, generates line-of-sight channels
//! and per-beam received-power sweeps, simulates the drone's sensor suite (GPS,
//! height, distance, speed, and a camera-detection proxy), assembles labeled
//! sensing-to-beam datasets, trains MLP beam classifiers, and evaluates them
//! with top-k and stratified accuracy metrics.
//!
//! All numeric code is generic over the scalar type through the [`Real`] trait
//! (implemented for `f32` and `f64`); concrete `f64` aliases are exported at the
//! crate root for everyday use.

pub mod channel;
pub mod codebook;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geom;
pub mod mlp;
pub mod oracle;
pub mod pipeline;
pub mod scenario;

use std::fmt::{Debug, Display};

use ndarray::LinalgScalar;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distributions::uniform::SampleUniform;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{Error, Result};

/// Floating-point scalar the whole toolkit is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + SampleUniform
    + Serialize
    + DeserializeOwned
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Draw a standard-normal sample of this scalar type.
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Real for f64 {
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

/// Convert an `f64` constant to the active scalar type.
///
/// Conversions from literal constants never fail for `f32`/`f64`.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

pub type ArrayGeometry64 = codebook::ArrayGeometry<f64>;
pub type BeamCodebook64 = codebook::BeamCodebook<f64>;
pub type ChannelRealization64 = channel::ChannelRealization<f64>;
pub type PowerVector64 = oracle::PowerVector<f64>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type MlpModel64 = mlp::MlpModel<f64>;
pub type Report = eval::EvalReport;
