//! Uniform-linear-array steering vectors, the oversampled beam codebook, and
//! per-beam array gains.
//!
//! Beam q of a grid codebook steers to the dimensionless sine
//! `-fov + q * 2*fov / (Q - 1)`, so the grid covers the field of view
//! symmetrically with uniform spacing in sine. Gains are computed with the
//! unconjugated transpose product `|h^T f|^2`, so a channel "aligned" with a
//! beam means `h = conj(a(s))`.

use std::io::{BufRead, BufReader, Read, Write};

use num_complex::Complex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::{real, Real};

/// Geometry of the basestation's uniform linear array.
///
/// `element_spacing` is in carrier wavelengths. `boresight` is the direction
/// of zero steering; `array_axis` is the line the elements sit on.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T> {
    num_elements: usize,
    element_spacing: T,
    boresight: Vec3<T>,
    array_axis: Vec3<T>,
}

impl<T: Real> ArrayGeometry<T> {
    pub fn new(
        num_elements: usize,
        element_spacing: T,
        boresight: Vec3<T>,
        array_axis: Vec3<T>,
    ) -> Result<Self> {
        if num_elements < 1 {
            return Err(Error::config("array needs at least one element"));
        }
        if !(element_spacing > T::zero()) {
            return Err(Error::config("element spacing must be positive"));
        }
        let boresight = boresight
            .normalized()
            .ok_or_else(|| Error::config("boresight must be a nonzero vector"))?;
        let array_axis = array_axis
            .normalized()
            .ok_or_else(|| Error::config("array axis must be a nonzero vector"))?;
        if boresight.dot(&array_axis).abs() > real(1e-9) {
            return Err(Error::config("array axis must be orthogonal to boresight"));
        }
        Ok(ArrayGeometry {
            num_elements,
            element_spacing,
            boresight,
            array_axis,
        })
    }

    /// Sky-facing 16-element half-wavelength array: boresight up, axis east.
    pub fn default_16() -> Self {
        ArrayGeometry::new(
            16,
            real(0.5),
            Vec3::from_f64(0.0, 0.0, 1.0),
            Vec3::from_f64(1.0, 0.0, 0.0),
        )
        .expect("default geometry is valid")
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn element_spacing(&self) -> T {
        self.element_spacing
    }

    pub fn boresight(&self) -> Vec3<T> {
        self.boresight
    }

    pub fn array_axis(&self) -> Vec3<T> {
        self.array_axis
    }

    /// Steering sine of a direction: projection of the unit vector onto the
    /// array axis.
    pub fn direction_sine(&self, unit_direction: Vec3<T>) -> T {
        unit_direction.dot(&self.array_axis)
    }
}

/// One analog beamforming vector: unit-modulus phase shifter weights scaled
/// by `1/sqrt(M)`, together with the steering sine it points at.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamVector<T> {
    weights: Vec<Complex<T>>,
    steering_sine: T,
}

impl<T: Real> BeamVector<T> {
    pub fn weights(&self) -> &[Complex<T>] {
        &self.weights
    }

    pub fn steering_sine(&self) -> T {
        self.steering_sine
    }

    pub fn num_elements(&self) -> usize {
        self.weights.len()
    }
}

/// ULA steering vector for a given sine: element m gets phase
/// `2*pi * spacing * m * sine` and modulus `1/sqrt(M)`.
pub fn steering_vector<T: Real>(geometry: &ArrayGeometry<T>, sine_angle: T) -> Result<BeamVector<T>> {
    if !sine_angle.is_finite() || sine_angle.abs() > T::one() {
        return Err(Error::data(format!(
            "steering sine {sine_angle} outside [-1, 1]"
        )));
    }
    let m = geometry.num_elements();
    let amplitude = T::one() / real::<T>(m as f64).sqrt();
    let two_pi = real::<T>(2.0 * std::f64::consts::PI);
    let weights = (0..m)
        .map(|i| {
            let phase = two_pi * geometry.element_spacing() * real::<T>(i as f64) * sine_angle;
            Complex::from_polar(amplitude, phase)
        })
        .collect();
    Ok(BeamVector {
        weights,
        steering_sine: sine_angle,
    })
}

/// Received-power gain of one beam against a channel vector: `|h^T f|^2`.
pub fn beam_gain<T: Real>(beam: &BeamVector<T>, channel: &[Complex<T>]) -> Result<T> {
    if channel.len() != beam.num_elements() {
        return Err(Error::data(format!(
            "channel length {} does not match {}-element beam",
            channel.len(),
            beam.num_elements()
        )));
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    for (h, f) in channel.iter().zip(beam.weights()) {
        acc = acc + h * f;
    }
    Ok(acc.norm_sqr())
}

/// An ordered set of beams covering the field of view, sorted by steering
/// sine.
///
/// Sines always lie within `[-fov, +fov]`; a grid built by [`build_codebook`]
/// additionally hits both endpoints exactly.
#[derive(Debug, Clone)]
pub struct BeamCodebook<T> {
    beams: Vec<BeamVector<T>>,
    geometry: ArrayGeometry<T>,
    fov_sine_half_width: T,
}

impl<T: Real> BeamCodebook<T> {
    fn validated(
        beams: Vec<BeamVector<T>>,
        geometry: ArrayGeometry<T>,
        fov_sine_half_width: T,
    ) -> Result<Self> {
        if beams.len() < 2 {
            return Err(Error::config("codebook needs at least two beams"));
        }
        if !(fov_sine_half_width > T::zero() && fov_sine_half_width <= T::one()) {
            return Err(Error::config("fov sine half-width must be in (0, 1]"));
        }
        let slack = real::<T>(1e-9);
        for pair in beams.windows(2) {
            if !(pair[1].steering_sine > pair[0].steering_sine) {
                return Err(Error::config("steering sines must be strictly increasing"));
            }
        }
        for b in &beams {
            if b.steering_sine.abs() > fov_sine_half_width + slack {
                return Err(Error::config("steering sine outside the field of view"));
            }
            if b.num_elements() != geometry.num_elements() {
                return Err(Error::config("beam length does not match array geometry"));
            }
        }
        Ok(BeamCodebook {
            beams,
            geometry,
            fov_sine_half_width,
        })
    }

    pub fn beams(&self) -> &[BeamVector<T>] {
        &self.beams
    }

    pub fn beam(&self, index: usize) -> &BeamVector<T> {
        &self.beams[index]
    }

    pub fn num_beams(&self) -> usize {
        self.beams.len()
    }

    pub fn geometry(&self) -> &ArrayGeometry<T> {
        &self.geometry
    }

    pub fn fov_sine_half_width(&self) -> T {
        self.fov_sine_half_width
    }

    /// Gains of every beam against a channel vector, in beam order.
    pub fn gains(&self, channel: &[Complex<T>]) -> Result<Vec<T>> {
        self.beams.iter().map(|b| beam_gain(b, channel)).collect()
    }

    /// Index of the beam whose steering sine is closest to `sine`; ties go to
    /// the lower index. This is the analytic route to the optimal beam for a
    /// channel aligned with direction `sine`.
    pub fn nearest_beam(&self, sine: T) -> usize {
        let mut best = 0;
        let mut best_dist = (self.beams[0].steering_sine - sine).abs();
        for (i, b) in self.beams.iter().enumerate().skip(1) {
            let d = (b.steering_sine - sine).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    /// Sub-codebook keeping every `factor`-th beam starting at index 0.
    pub fn keep_every(&self, factor: usize) -> Result<BeamCodebook<T>> {
        if factor == 0 || self.beams.len() % factor != 0 {
            return Err(Error::config(format!(
                "cannot keep every {factor}-th beam of {}",
                self.beams.len()
            )));
        }
        let beams = self.beams.iter().step_by(factor).cloned().collect();
        BeamCodebook::validated(beams, self.geometry.clone(), self.fov_sine_half_width)
    }

    /// Stable identifier over geometry and steering sines, carried by power
    /// vectors so labels can be traced back to the codebook that made them.
    pub fn id(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.geometry.num_elements() as u64).to_le_bytes());
        hasher.update(
            self.geometry
                .element_spacing()
                .to_f64()
                .unwrap_or(f64::NAN)
                .to_bits()
                .to_le_bytes(),
        );
        hasher.update((self.beams.len() as u64).to_le_bytes());
        for b in &self.beams {
            hasher.update(
                b.steering_sine
                    .to_f64()
                    .unwrap_or(f64::NAN)
                    .to_bits()
                    .to_le_bytes(),
            );
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Build the oversampled grid codebook: `num_beams` beams uniform in sine
/// over `[-fov, +fov]`.
pub fn build_codebook<T: Real>(
    geometry: &ArrayGeometry<T>,
    num_beams: usize,
    fov_sine_half_width: T,
) -> Result<BeamCodebook<T>> {
    if num_beams < 2 {
        return Err(Error::config("codebook needs at least two beams"));
    }
    if !(fov_sine_half_width > T::zero() && fov_sine_half_width <= T::one()) {
        return Err(Error::config("fov sine half-width must be in (0, 1]"));
    }
    let step = real::<T>(2.0) * fov_sine_half_width / real((num_beams - 1) as f64);
    let beams = (0..num_beams)
        .map(|q| {
            let sine = -fov_sine_half_width + step * real(q as f64);
            // Clamp away float drift so the endpoints land exactly on the fov.
            let sine = if sine > fov_sine_half_width {
                fov_sine_half_width
            } else {
                sine
            };
            steering_vector(geometry, sine)
        })
        .collect::<Result<Vec<_>>>()?;
    BeamCodebook::validated(beams, geometry.clone(), fov_sine_half_width)
}

/// Write a grid codebook as a text matrix: a header line `M Q fov spacing`,
/// then one beam per row with interleaved real/imag weight values.
///
/// Only uniform-grid codebooks (as produced by [`build_codebook`]) can be
/// exported, because the reader reconstructs steering sines from the header.
pub fn write_codebook<T: Real, W: Write>(writer: &mut W, codebook: &BeamCodebook<T>) -> Result<()> {
    let q = codebook.num_beams();
    let fov = codebook.fov_sine_half_width();
    let step = real::<T>(2.0) * fov / real((q - 1) as f64);
    for (i, b) in codebook.beams().iter().enumerate() {
        let expected = -fov + step * real(i as f64);
        if (b.steering_sine() - expected).abs() > real(1e-9) {
            return Err(Error::data(
                "only uniform-grid codebooks can be exported".to_string(),
            ));
        }
    }
    writeln!(
        writer,
        "{} {} {} {}",
        codebook.geometry().num_elements(),
        q,
        fov,
        codebook.geometry().element_spacing()
    )?;
    for b in codebook.beams() {
        let mut parts = Vec::with_capacity(2 * b.num_elements());
        for w in b.weights() {
            parts.push(format!("{}", w.re));
            parts.push(format!("{}", w.im));
        }
        writeln!(writer, "{}", parts.join(" "))?;
    }
    Ok(())
}

/// Read a codebook written by [`write_codebook`]. The array is assumed to be
/// the canonical sky-facing orientation (boresight up, axis east).
pub fn read_codebook<T: Real, R: Read>(reader: R) -> Result<BeamCodebook<T>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty codebook file"))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(Error::parse(1, "header must be `M Q fov spacing`"));
    }
    let m: usize = fields[0]
        .parse()
        .map_err(|_| Error::parse(1, "bad element count"))?;
    let q: usize = fields[1]
        .parse()
        .map_err(|_| Error::parse(1, "bad beam count"))?;
    let fov: f64 = fields[2].parse().map_err(|_| Error::parse(1, "bad fov"))?;
    let spacing: f64 = fields[3]
        .parse()
        .map_err(|_| Error::parse(1, "bad spacing"))?;
    if q < 2 {
        return Err(Error::parse(1, "beam count must be at least 2"));
    }
    let geometry = ArrayGeometry::new(
        m,
        real(spacing),
        Vec3::from_f64(0.0, 0.0, 1.0),
        Vec3::from_f64(1.0, 0.0, 0.0),
    )?;
    let step = 2.0 * fov / (q - 1) as f64;
    let mut beams = Vec::with_capacity(q);
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(row, "bad weight value"))?;
        if values.len() != 2 * m {
            return Err(Error::parse(
                row,
                format!("expected {} values, found {}", 2 * m, values.len()),
            ));
        }
        let weights: Vec<Complex<T>> = values
            .chunks(2)
            .map(|c| Complex::new(real(c[0]), real(c[1])))
            .collect();
        let sine = -fov + step * i as f64;
        let sine = if sine > fov { fov } else { sine };
        beams.push(BeamVector {
            weights,
            steering_sine: real(sine),
        });
    }
    if beams.len() != q {
        return Err(Error::data(format!(
            "expected {} beams, found {}",
            q,
            beams.len()
        )));
    }
    let amplitude = 1.0 / (m as f64).sqrt();
    for (qi, b) in beams.iter().enumerate() {
        for w in b.weights() {
            let modulus = w.norm().to_f64().unwrap_or(f64::NAN);
            if (modulus - amplitude).abs() > 1e-6 {
                return Err(Error::data(format!(
                    "beam {qi} violates the unit-modulus constraint"
                )));
            }
        }
    }
    BeamCodebook::validated(beams, geometry, real(fov))
}
