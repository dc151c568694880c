//! Quaternion algebra for the monogenic signal.
//!
//! A pyramid coefficient with its two Riesz components is held as
//! `q = p + i r1 + j r2 + k 0`. The phase path only needs the norm,
//! conjugate, inverse, Hamilton product and the logarithm of a unit
//! quaternion.

use std::ops::{Div, Mul, Neg};

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quaternion {
    pub s: f64,
    pub i: f64,
    pub j: f64,
    pub k: f64,
}

/// Result of [`Quaternion::log_unit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitLog {
    /// Pure quaternion (scalar part zero).
    pub value: Quaternion,
    /// Set when the input was `-1`, where the log axis is undefined.
    pub singular: bool,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(s: f64, i: f64, j: f64, k: f64) -> Self {
        Self { s, i, j, k }
    }

    /// The monogenic triple `(p, r1, r2)` as a quaternion with zero `k` part.
    pub const fn monogenic(p: f64, r1: f64, r2: f64) -> Self {
        Self::new(p, r1, r2, 0.0)
    }

    pub fn norm_sqr(self) -> f64 {
        self.s * self.s + self.i * self.i + self.j * self.j + self.k * self.k
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn vector_norm(self) -> f64 {
        (self.i * self.i + self.j * self.j + self.k * self.k).sqrt()
    }

    pub fn conj(self) -> Self {
        Self::new(self.s, -self.i, -self.j, -self.k)
    }

    pub fn inv(self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(Error::ZeroQuaternion);
        }
        Ok(self.conj() / n2)
    }

    /// `q / ‖q‖`, or `None` for the zero quaternion.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0).then(|| self / n)
    }

    /// Logarithm of a unit quaternion: `(v / ‖v‖) · arccos(s)`.
    ///
    /// The identity maps to zero. At `-1` the axis is undefined; the result is
    /// `π` along `i` with `singular` set.
    pub fn log_unit(self) -> Result<UnitLog> {
        self.log_unit_with(&Tolerances::DEFAULT)
    }

    pub fn log_unit_with(self, tol: &Tolerances) -> Result<UnitLog> {
        let n = self.norm();
        if !((n - 1.0).abs() <= tol.unit_norm) {
            return Err(Error::NotUnitNorm(n));
        }
        let vn = self.vector_norm();
        if vn < tol.zero_vector {
            if self.s > 0.0 {
                return Ok(UnitLog {
                    value: Quaternion::ZERO,
                    singular: false,
                });
            }
            return Ok(UnitLog {
                value: Quaternion::new(0.0, std::f64::consts::PI, 0.0, 0.0),
                singular: true,
            });
        }
        // atan2 equals arccos(s) on the unit sphere and keeps precision near s = ±1.
        let angle = vn.atan2(self.s);
        let scale = angle / vn;
        Ok(UnitLog {
            value: Quaternion::new(0.0, self.i * scale, self.j * scale, self.k * scale),
            singular: false,
        })
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product.
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.s * b.s - a.i * b.i - a.j * b.j - a.k * b.k,
            a.s * b.i + a.i * b.s + a.j * b.k - a.k * b.j,
            a.s * b.j - a.i * b.k + a.j * b.s + a.k * b.i,
            a.s * b.k + a.i * b.j - a.j * b.i + a.k * b.s,
        )
    }
}

impl Div<f64> for Quaternion {
    type Output = Quaternion;

    fn div(self, d: f64) -> Quaternion {
        Quaternion::new(self.s / d, self.i / d, self.j / d, self.k / d)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;

    fn mul(self, f: f64) -> Quaternion {
        Quaternion::new(self.s * f, self.i * f, self.j * f, self.k * f)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;

    fn neg(self) -> Quaternion {
        Quaternion::new(-self.s, -self.i, -self.j, -self.k)
    }
}
