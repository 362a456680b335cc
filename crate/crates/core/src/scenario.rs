//! Drone flight simulation and the sensor suite: waypoint trajectories,
//! noisy GPS in geodetic coordinates, height/distance/speed readouts, and a
//! sky-facing camera that projects the drone to normalized pixel
//! coordinates.
//!
//! Positions live in a local East-North-Up frame anchored at the
//! basestation; GPS output converts to latitude/longitude through an
//! equirectangular small-area approximation around a configurable anchor.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{orthonormal_companions, Vec3};
use crate::{real, Real};

/// Earth radius used by the equirectangular conversion, metres.
pub const EARTH_RADIUS_M: f64 = 6378137.0;

/// Default geodetic anchor of the basestation (degrees).
pub const DEFAULT_ANCHOR_LAT_DEG: f64 = 33.427;
pub const DEFAULT_ANCHOR_LON_DEG: f64 = -111.939;

/// Ground-truth drone kinematics at one sample instant. Positions are ENU
/// metres with the basestation at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneState<T> {
    pub time_s: T,
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
}

/// One multi-sensor observation of the drone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample<T> {
    pub gps_lat_deg: T,
    pub gps_lon_deg: T,
    pub height_m: T,
    pub distance_m: T,
    pub speed_mps: T,
    pub visual: Option<VisualDetection<T>>,
}

/// What a perfect drone detector would report from one camera frame:
/// normalized pixel coordinates in `[0,1]^2` and an apparent-size proxy in
/// `(0,1]` that shrinks with range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualDetection<T> {
    pub u: T,
    pub v: T,
    pub size: T,
}

/// Pinhole camera with a rectangular field of view.
///
/// `reference_size_m` calibrates the apparent-size proxy: a drone at range
/// `reference_size_m / s` metres reports size `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<T> {
    position: Vec3<T>,
    optical_axis: Vec3<T>,
    image_right: Vec3<T>,
    image_up: Vec3<T>,
    horizontal_fov_deg: T,
    vertical_fov_deg: T,
    reference_size_m: T,
    tan_half_h: T,
    tan_half_v: T,
}

impl<T: Real> CameraModel<T> {
    pub fn new(
        position: Vec3<T>,
        optical_axis: Vec3<T>,
        horizontal_fov_deg: T,
        vertical_fov_deg: T,
        reference_size_m: T,
    ) -> Result<Self> {
        for (name, fov) in [
            ("horizontal", horizontal_fov_deg),
            ("vertical", vertical_fov_deg),
        ] {
            if !(fov > T::zero() && fov < real(180.0)) {
                return Err(Error::config(format!(
                    "{name} fov must be strictly between 0 and 180 degrees"
                )));
            }
        }
        if !(reference_size_m > T::zero()) {
            return Err(Error::config("camera reference size must be positive"));
        }
        let optical_axis = optical_axis
            .normalized()
            .ok_or_else(|| Error::config("camera optical axis must be a nonzero vector"))?;
        let (image_right, image_up) = orthonormal_companions(optical_axis);
        let half = real::<T>(0.5 * std::f64::consts::PI / 180.0);
        Ok(CameraModel {
            position,
            optical_axis,
            image_right,
            image_up,
            horizontal_fov_deg,
            vertical_fov_deg,
            reference_size_m,
            tan_half_h: (horizontal_fov_deg * half).tan(),
            tan_half_v: (vertical_fov_deg * half).tan(),
        })
    }

    /// Sky-facing camera at the basestation with a 120x120 degree field of
    /// view.
    pub fn default_sky() -> Self {
        CameraModel::new(
            Vec3::zero(),
            Vec3::from_f64(0.0, 0.0, 1.0),
            real(120.0),
            real(120.0),
            T::one(),
        )
        .expect("default camera is valid")
    }

    pub fn position(&self) -> Vec3<T> {
        self.position
    }

    pub fn optical_axis(&self) -> Vec3<T> {
        self.optical_axis
    }

    pub fn horizontal_fov_deg(&self) -> T {
        self.horizontal_fov_deg
    }

    pub fn vertical_fov_deg(&self) -> T {
        self.vertical_fov_deg
    }

    pub fn reference_size_m(&self) -> T {
        self.reference_size_m
    }

    /// Normalized pixel coordinates of a world point, or `None` when the
    /// point is outside the frustum. Both FoV edges are inclusive, so
    /// returned coordinates lie in `[0,1]^2`. The projection depends only on
    /// the direction from the camera, never the range.
    pub fn project(&self, point: Vec3<T>) -> Option<(T, T)> {
        let d = point - self.position;
        let depth = d.dot(&self.optical_axis);
        if !(depth > T::zero()) {
            return None;
        }
        let rx = d.dot(&self.image_right) / depth;
        let ry = d.dot(&self.image_up) / depth;
        if rx.abs() > self.tan_half_h || ry.abs() > self.tan_half_v {
            return None;
        }
        let half = real::<T>(0.5);
        Some((
            half + half * rx / self.tan_half_h,
            half + half * ry / self.tan_half_v,
        ))
    }
}

/// Flight plan and sensor settings for one simulated recording.
///
/// Waypoints are ENU metres. The anchor fields place the ENU origin on the
/// globe for GPS output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig<T> {
    pub waypoints: Vec<Vec3<T>>,
    pub speed_range: [T; 2],
    pub height_range: [T; 2],
    pub sample_rate_hz: T,
    pub gps_noise_sigma_m: T,
    pub rng_seed: u64,
    pub anchor_lat_deg: T,
    pub anchor_lon_deg: T,
}

impl<T: Real> Default for TrajectoryConfig<T> {
    fn default() -> Self {
        TrajectoryConfig {
            waypoints: Vec::new(),
            speed_range: [real(2.0), real(10.0)],
            height_range: [real(10.0), real(100.0)],
            sample_rate_hz: real(10.0),
            gps_noise_sigma_m: real(2.5),
            rng_seed: 0,
            anchor_lat_deg: real(DEFAULT_ANCHOR_LAT_DEG),
            anchor_lon_deg: real(DEFAULT_ANCHOR_LON_DEG),
        }
    }
}

impl<T: Real> TrajectoryConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::config("trajectory needs at least two waypoints"));
        }
        let [smin, smax] = self.speed_range;
        let [hmin, hmax] = self.height_range;
        if !(smin <= smax) || !smin.is_finite() || !smax.is_finite() || smin < T::zero() {
            return Err(Error::config("speed range must satisfy 0 <= min <= max"));
        }
        if !(hmin <= hmax) || !hmin.is_finite() || !hmax.is_finite() {
            return Err(Error::config("height range must satisfy min <= max"));
        }
        if !(self.sample_rate_hz > T::zero()) || !self.sample_rate_hz.is_finite() {
            return Err(Error::config("sample rate must be positive"));
        }
        if self.gps_noise_sigma_m < T::zero() || !self.gps_noise_sigma_m.is_finite() {
            return Err(Error::config("gps noise sigma must be non-negative"));
        }
        if self.anchor_lat_deg.abs() >= real(90.0) {
            return Err(Error::config("anchor latitude must lie strictly inside the poles"));
        }
        let mut has_motion = false;
        for w in &self.waypoints {
            if !w.is_finite() {
                return Err(Error::config("waypoints must be finite"));
            }
            if w.z < T::zero() || w.z < hmin || w.z > hmax {
                return Err(Error::config(format!(
                    "waypoint height {} outside [{hmin}, {hmax}] (and >= 0)",
                    w.z
                )));
            }
        }
        for pair in self.waypoints.windows(2) {
            if (pair[1] - pair[0]).norm() > T::zero() {
                has_motion = true;
            }
        }
        if has_motion && !(smin > T::zero()) {
            return Err(Error::config(
                "speed range must exclude zero to traverse non-degenerate segments",
            ));
        }
        Ok(())
    }
}

/// Fly the waypoint list once and sample the flight at `sample_rate_hz`.
///
/// Each segment is traversed in a straight line at a constant speed drawn
/// uniformly from `speed_range` (one draw per segment, seeded by
/// `rng_seed`). States are emitted at `t = k / rate` for `k = 0..` up to and
/// including the total flight time. Zero-length segments take zero time, so
/// a fully degenerate plan (hover) yields the single initial state with zero
/// velocity.
pub fn generate_trajectory<T: Real>(cfg: &TrajectoryConfig<T>) -> Result<Vec<DroneState<T>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let [smin, smax] = cfg.speed_range;
    struct Segment<T> {
        start: Vec3<T>,
        velocity: Vec3<T>,
        begin_time: T,
        duration: T,
    }
    let mut segments: Vec<Segment<T>> = Vec::new();
    let mut clock = T::zero();
    for pair in cfg.waypoints.windows(2) {
        let speed = rng.gen_range(smin..=smax);
        let offset = pair[1] - pair[0];
        let length = offset.norm();
        if length > T::zero() {
            let duration = length / speed;
            segments.push(Segment {
                start: pair[0],
                velocity: offset * (speed / length),
                begin_time: clock,
                duration,
            });
            clock += duration;
        }
    }
    let total = clock;
    let rate = cfg.sample_rate_hz;
    let count = (total * rate + real(1e-9)).floor().to_usize().ok_or_else(|| {
        Error::config("flight too long for the configured sample rate")
    })?;
    let mut states = Vec::with_capacity(count + 1);
    let mut seg_idx = 0usize;
    for k in 0..=count {
        let t = real::<T>(k as f64) / rate;
        while seg_idx + 1 < segments.len() && t >= segments[seg_idx + 1].begin_time {
            seg_idx += 1;
        }
        let (position, velocity) = match segments.get(seg_idx) {
            None => (cfg.waypoints[0], Vec3::zero()),
            Some(seg) => {
                let tau = (t - seg.begin_time).min(seg.duration).max(T::zero());
                (seg.start + seg.velocity * tau, seg.velocity)
            }
        };
        states.push(DroneState {
            time_s: t,
            position,
            velocity,
        });
    }
    Ok(states)
}

/// Latitude/longitude of an ENU offset from the anchor (equirectangular
/// small-area approximation).
pub fn enu_to_geodetic<T: Real>(
    east_m: T,
    north_m: T,
    anchor_lat_deg: T,
    anchor_lon_deg: T,
) -> (T, T) {
    let rad_to_deg = real::<T>(180.0 / std::f64::consts::PI);
    let radius = real::<T>(EARTH_RADIUS_M);
    let lat = anchor_lat_deg + (north_m / radius) * rad_to_deg;
    let cos_lat = (anchor_lat_deg / rad_to_deg).cos();
    let lon = anchor_lon_deg + (east_m / (radius * cos_lat)) * rad_to_deg;
    (lat, lon)
}

/// Inverse of [`enu_to_geodetic`] around the same anchor.
pub fn geodetic_to_enu<T: Real>(
    lat_deg: T,
    lon_deg: T,
    anchor_lat_deg: T,
    anchor_lon_deg: T,
) -> (T, T) {
    let deg_to_rad = real::<T>(std::f64::consts::PI / 180.0);
    let radius = real::<T>(EARTH_RADIUS_M);
    let north = (lat_deg - anchor_lat_deg) * deg_to_rad * radius;
    let cos_lat = (anchor_lat_deg * deg_to_rad).cos();
    let east = (lon_deg - anchor_lon_deg) * deg_to_rad * radius * cos_lat;
    (east, north)
}

/// Observe one drone state through the sensor suite.
///
/// GPS reports the true horizontal position plus zero-mean Gaussian noise
/// with `gps_noise_sigma_m` per horizontal axis, converted to geodetic
/// degrees. Height, distance (slant range to the basestation at the ENU
/// origin), and speed are reported noiselessly. The visual detection is
/// present exactly when the camera sees the drone; its absence is a valid
/// outcome, not an error. Two noise values are drawn per call regardless of
/// sigma, so toggling noise never shifts downstream draws.
pub fn sense<T: Real, R: Rng + ?Sized>(
    state: &DroneState<T>,
    camera: &CameraModel<T>,
    cfg: &TrajectoryConfig<T>,
    rng: &mut R,
) -> Result<SensorSample<T>> {
    let sigma = cfg.gps_noise_sigma_m;
    let east = state.position.x + sigma * T::sample_normal(rng);
    let north = state.position.y + sigma * T::sample_normal(rng);
    let (gps_lat_deg, gps_lon_deg) =
        enu_to_geodetic(east, north, cfg.anchor_lat_deg, cfg.anchor_lon_deg);
    let distance_m = state.position.norm();
    if !(distance_m > T::zero()) {
        return Err(Error::data(
            "drone coincides with the basestation; distance undefined",
        ));
    }
    let visual = camera.project(state.position).map(|(u, v)| VisualDetection {
        u,
        v,
        size: (camera.reference_size_m() / distance_m).min(T::one()),
    });
    Ok(SensorSample {
        gps_lat_deg,
        gps_lon_deg,
        height_m: state.position.z,
        distance_m,
        speed_mps: state.velocity.norm(),
        visual,
    })
}
