//! Line-of-sight narrowband channel between the basestation array and a
//! drone, and the per-beam received-power sweep.
//!
//! The channel vector is `h = g * conj(a(s))` where `a` is the array steering
//! vector for the drone's direction sine `s` and `g` is the complex path
//! gain: magnitude `1 m / distance`, phase drawn uniformly from `[0, 2*pi)`.
//! With the unconjugated gain convention `|h^T f|^2`, a matched beam
//! `f = a(s)` collects the full path power `|g|^2`. Absolute calibration is
//! irrelevant downstream because beam labels depend only on the argmax.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{steering_vector, ArrayGeometry, BeamCodebook};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::oracle::PowerVector;
use crate::{real, Real};

/// Path-loss reference range: a drone at this distance has unit path gain.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// Default carrier wavelength in metres (60 GHz). Informational: element
/// spacing is already expressed in wavelengths, so no formula consumes this.
pub const DEFAULT_CARRIER_WAVELENGTH_M: f64 = 0.005;

/// Endpoint positions of one basestation-drone link, in metres (shared ENU
/// frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry<T> {
    pub bs_position: Vec3<T>,
    pub drone_position: Vec3<T>,
    pub carrier_wavelength_m: T,
}

impl<T: Real> LinkGeometry<T> {
    pub fn new(bs_position: Vec3<T>, drone_position: Vec3<T>) -> Result<Self> {
        let link = LinkGeometry {
            bs_position,
            drone_position,
            carrier_wavelength_m: real(DEFAULT_CARRIER_WAVELENGTH_M),
        };
        if !(link.distance() > T::zero()) || !link.distance().is_finite() {
            return Err(Error::data(
                "drone position must be finite and distinct from the basestation",
            ));
        }
        Ok(link)
    }

    pub fn distance(&self) -> T {
        (self.drone_position - self.bs_position).norm()
    }
}

/// One narrowband channel snapshot, flat across `num_subcarriers`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    coefficients: Vec<Complex<T>>,
    num_subcarriers: usize,
    path_gain: Complex<T>,
    steering_sine: T,
    distance: T,
}

impl<T: Real> ChannelRealization<T> {
    pub fn coefficients(&self) -> &[Complex<T>] {
        &self.coefficients
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn path_gain(&self) -> Complex<T> {
        self.path_gain
    }

    pub fn steering_sine(&self) -> T {
        self.steering_sine
    }

    pub fn distance(&self) -> T {
        self.distance
    }

    pub fn num_elements(&self) -> usize {
        self.coefficients.len()
    }

    /// Same flat channel observed over `k` subcarriers (noise is drawn per
    /// subcarrier during the power sweep).
    pub fn with_num_subcarriers(mut self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("subcarrier count must be at least 1"));
        }
        self.num_subcarriers = k;
        Ok(self)
    }
}

/// Measurement-noise settings for the power sweep.
///
/// `rng_seed` is carried so pipelines can reconstruct the seeded source that
/// belongs to this noise model; the sweep itself uses the source it is
/// handed. With `noiseless` set, each power entry is exactly
/// `snr * |h^T f|^2` and the source is untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    pub snr_db: T,
    pub rng_seed: u64,
    pub noiseless: bool,
}

impl<T: Real> NoiseModel<T> {
    pub fn noiseless() -> Self {
        NoiseModel {
            snr_db: T::zero(),
            rng_seed: 0,
            noiseless: true,
        }
    }

    pub fn noisy(snr_db: T, rng_seed: u64) -> Self {
        NoiseModel {
            snr_db,
            rng_seed,
            noiseless: false,
        }
    }

    pub fn snr_linear(&self) -> T {
        real::<T>(10.0).powf(self.snr_db / real(10.0))
    }
}

/// Draw the LOS channel for the link. The path phase is the only random
/// quantity; the steering sine and gain magnitude follow deterministically
/// from the geometry.
pub fn los_channel<T: Real, R: Rng + ?Sized>(
    geometry: &LinkGeometry<T>,
    array: &ArrayGeometry<T>,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    let offset = geometry.drone_position - geometry.bs_position;
    let distance = offset.norm();
    if !(distance > T::zero()) || !distance.is_finite() {
        return Err(Error::data(
            "drone position must be finite and distinct from the basestation",
        ));
    }
    let unit = offset * (T::one() / distance);
    let sine = array.direction_sine(unit).max(-T::one()).min(T::one());
    let magnitude = real::<T>(REFERENCE_DISTANCE_M) / distance;
    let phase = rng.gen_range(T::zero()..real::<T>(2.0 * std::f64::consts::PI));
    let path_gain = Complex::from_polar(magnitude, phase);
    let steering = steering_vector(array, sine)?;
    let coefficients = steering
        .weights()
        .iter()
        .map(|w| path_gain * w.conj())
        .collect();
    Ok(ChannelRealization {
        coefficients,
        num_subcarriers: 1,
        path_gain,
        steering_sine: sine,
        distance,
    })
}

/// Sweep every beam of the codebook against the channel.
///
/// Entry q is `(1/K) * sum_k |h^T f_q * x + v_k|^2` with `x = sqrt(snr)` and
/// `v_k` unit-variance complex Gaussian noise drawn fresh for every
/// (beam, subcarrier) pair.
pub fn received_power_vector<T: Real, R: Rng + ?Sized>(
    chan: &ChannelRealization<T>,
    codebook: &BeamCodebook<T>,
    noise: &NoiseModel<T>,
    rng: &mut R,
) -> Result<PowerVector<T>> {
    if chan.num_elements() != codebook.geometry().num_elements() {
        return Err(Error::data(format!(
            "{}-element channel does not match {}-element codebook",
            chan.num_elements(),
            codebook.geometry().num_elements()
        )));
    }
    let snr = noise.snr_linear();
    if !snr.is_finite() {
        return Err(Error::config(format!(
            "snr {} dB overflows the scalar type",
            noise.snr_db
        )));
    }
    let amplitude = snr.sqrt();
    let noise_scale = real::<T>(0.5).sqrt();
    let k = chan.num_subcarriers();
    let mut values = Vec::with_capacity(codebook.num_beams());
    for beam in codebook.beams() {
        let mut rx = Complex::new(T::zero(), T::zero());
        for (h, f) in chan.coefficients().iter().zip(beam.weights()) {
            rx = rx + h * f;
        }
        if noise.noiseless {
            values.push(snr * rx.norm_sqr());
            continue;
        }
        let signal = rx * amplitude;
        let mut acc = T::zero();
        for _ in 0..k {
            let v = Complex::new(
                T::sample_normal(rng) * noise_scale,
                T::sample_normal(rng) * noise_scale,
            );
            acc += (signal + v).norm_sqr();
        }
        values.push(acc / real(k as f64));
    }
    PowerVector::new(values, codebook.id())
}
