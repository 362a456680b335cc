//! Minimal 3-vector math used by the geometry, channel, and sensor modules.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{real, Real};

/// Cartesian 3-vector in the local East-North-Up frame (meters) or a unit
/// direction, depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    /// Build from `f64` components, converting to the active scalar.
    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Vec3::new(real(x), real(y), real(z))
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Self) -> Self {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n <= T::zero() {
            None
        } else {
            Some(*self * (T::one() / n))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Two unit vectors completing `axis` to a right-handed orthonormal frame.
///
/// The rule is deterministic: for a near-vertical axis the first companion is
/// world east, otherwise it is the horizontal vector perpendicular to the
/// axis. Returned as (right, up) such that right x up = axis.
pub fn orthonormal_companions<T: Real>(axis: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let axis = axis.normalized().expect("axis must be nonzero");
    let helper = if axis.z.abs() > real(0.9) {
        Vec3::new(T::one(), T::zero(), T::zero())
    } else {
        Vec3::new(T::zero(), T::zero(), T::one())
    };
    // Gram-Schmidt: remove the axis component from the helper.
    let right = (helper - axis * helper.dot(&axis))
        .normalized()
        .expect("helper not parallel to axis");
    let up = axis.cross(&right);
    (right, up)
}
