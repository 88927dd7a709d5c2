//! Quaternion and 3-vector arithmetic.
//!
//! Quaternions are Hamilton, stored w-first, and act on right-handed, y-up
//! frames. Every composition that produces a rotation is renormalized and
//! sign-canonicalized to `w >= 0` so that componentwise rotation differences
//! are well defined across the q / -q double cover.

use std::ops::{Add, AddAssign, Div, Index, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|q| - 1` accepted by [`Quat::rotate_checked`].
pub const UNIT_TOLERANCE: f64 = 1e-6;
/// Norms below this are treated as degenerate by [`Quat::normalized`].
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub const fn splat(v: f64) -> Self {
        Vec3 { x: v, y: v, z: v }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Squared Euclidean distance, evaluated in a fixed order so that every
    /// nearest-neighbour route produces bit-identical results.
    #[inline]
    pub fn distance_squared(self, o: Vec3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn component_min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn component_max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl MulAssign<f64> for Vec3 {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        self.x *= s;
        self.y *= s;
        self.z *= s;
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Hamilton quaternion, w-first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    #[inline]
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let a = axis.normalized();
        let (s, c) = (0.5 * angle).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s).canonical()
    }

    #[inline]
    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    #[inline]
    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Flip the sign so that `w >= 0`. Exactly-zero `w` keeps the first
    /// nonzero vector component positive.
    #[inline]
    pub fn canonical(self) -> Quat {
        if self.canonical_sign() < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `+1.0` or `-1.0`, the factor [`Quat::canonical`] multiplies by.
    #[inline]
    pub fn canonical_sign(self) -> f64 {
        if self.w > 0.0 {
            1.0
        } else if self.w < 0.0 {
            -1.0
        } else {
            let first = [self.x, self.y, self.z].into_iter().find(|c| *c != 0.0);
            match first {
                Some(c) if c < 0.0 => -1.0,
                _ => 1.0,
            }
        }
    }

    /// Unit quaternion in the same direction, sign-canonicalized.
    pub fn normalized(self) -> Result<Quat> {
        let n = self.norm();
        if !(n > DEGENERATE_NORM) || !n.is_finite() {
            return Err(Error::DegenerateQuaternion { norm: n });
        }
        Ok(self.scale(1.0 / n).canonical())
    }

    #[inline]
    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Hamilton product without renormalization.
    #[inline]
    pub fn hamilton(self, b: Quat) -> Quat {
        let a = self;
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Hamilton product. When both inputs are unit the result is renormalized
    /// and sign-canonicalized; otherwise the raw product is returned.
    pub fn multiply(self, b: Quat) -> Quat {
        let p = self.hamilton(b);
        if self.is_unit(UNIT_TOLERANCE) && b.is_unit(UNIT_TOLERANCE) {
            let n = p.norm();
            p.scale(1.0 / n).canonical()
        } else {
            p
        }
    }

    /// Rotate `v`, assuming `self` is unit. Uses `v + 2w(u x v) + 2u x (u x v)`.
    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = self.vector();
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// [`Quat::rotate`] with the unit-norm precondition enforced.
    pub fn rotate_checked(self, v: Vec3) -> Result<Vec3> {
        if !self.is_unit(UNIT_TOLERANCE) {
            return Err(Error::NonUnitQuaternion { norm: self.norm() });
        }
        Ok(self.rotate(v))
    }

    /// Row-major 3x3 rotation matrix of a unit quaternion.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Gradient of `g . rotate(self, v)` with respect to the four quaternion
    /// components, for a fixed `v`.
    #[inline]
    pub fn rotate_vjp(self, v: Vec3, g: Vec3) -> Quat {
        let u = self.vector();
        let uxv = u.cross(v);
        let dw = 2.0 * g.dot(uxv);
        let du = v.cross(g) * (2.0 * self.w) + g * (2.0 * u.dot(v)) + v * (2.0 * g.dot(u)) - u * (4.0 * g.dot(v));
        Quat::new(dw, du.x, du.y, du.z)
    }

    /// Given the adjoint `g` of `a.hamilton(b)`, the adjoint of `a`.
    #[inline]
    pub fn hamilton_vjp_lhs(g: Quat, b: Quat) -> Quat {
        // a (x) b = R(b) a, so the adjoint is R(b)^T g = g (x) conj(b).
        g.hamilton(b.conjugate())
    }

    /// Given the adjoint `g` of `a.hamilton(b)`, the adjoint of `b`.
    #[inline]
    pub fn hamilton_vjp_rhs(g: Quat, a: Quat) -> Quat {
        // a (x) b = L(a) b, so the adjoint is L(a)^T g = conj(a) (x) g.
        a.conjugate().hamilton(g)
    }
}

impl Neg for Quat {
    type Output = Quat;
    #[inline]
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Add for Quat {
    type Output = Quat;
    #[inline]
    fn add(self, o: Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Quat {
    #[inline]
    fn add_assign(&mut self, o: Quat) {
        self.w += o.w;
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Quat {
    type Output = Quat;
    #[inline]
    fn sub(self, o: Quat) -> Quat {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Hamilton product; see [`Quat::multiply`].
pub fn quat_multiply(a: Quat, b: Quat) -> Quat {
    a.multiply(b)
}

/// Rotate `v` by unit quaternion `q`.
pub fn quat_rotate(q: Quat, v: Vec3) -> Result<Vec3> {
    q.rotate_checked(v)
}

pub fn quat_normalize(q: Quat) -> Result<Quat> {
    q.normalized()
}
