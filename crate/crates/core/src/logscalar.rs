//! Log-polar complex numbers.
//!
//! A [`LogScalar`] stores `ln|z|` and `arg z`, so values such as `0.5^(2^40)`
//! or `10^(2^30)` stay representable. Addition is done relative to the larger
//! operand, which keeps the relative error at the level of ordinary doubles.

use std::f64::consts::TAU;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScalar {
    /// Natural log of the modulus; `-inf` encodes zero.
    pub log_modulus: f64,
    /// Argument in `[0, 2π)`.
    pub phase: f64,
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl LogScalar {
    pub const ZERO: LogScalar = LogScalar { log_modulus: f64::NEG_INFINITY, phase: 0.0 };
    pub const ONE: LogScalar = LogScalar { log_modulus: 0.0, phase: 0.0 };

    pub fn new(log_modulus: f64, phase: f64) -> Self {
        if log_modulus == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        LogScalar { log_modulus, phase: wrap_phase(phase) }
    }

    /// Positive real number given by its natural log.
    pub fn from_ln(ln: f64) -> Self {
        Self::new(ln, 0.0)
    }

    pub fn from_real(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else if x > 0.0 {
            LogScalar { log_modulus: x.ln(), phase: 0.0 }
        } else {
            LogScalar { log_modulus: (-x).ln(), phase: std::f64::consts::PI }
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.re == 0.0 && z.im == 0.0 {
            return Self::ZERO;
        }
        Self::new(z.norm().ln(), z.im.atan2(z.re))
    }

    /// `base^exponent` for a positive real base, exact in log form.
    pub fn real_pow(base: f64, exponent: f64) -> Self {
        assert!(base > 0.0, "real_pow needs a positive base");
        Self::from_ln(exponent * base.ln())
    }

    pub fn is_zero(self) -> bool {
        self.log_modulus == f64::NEG_INFINITY
    }

    pub fn is_finite(self) -> bool {
        self.is_zero() || (self.log_modulus.is_finite() && self.phase.is_finite())
    }

    /// Modulus as a double; under/overflows to 0 or inf.
    pub fn modulus(self) -> f64 {
        self.log_modulus.exp()
    }

    pub fn to_complex(self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.log_modulus.exp(), self.phase)
    }

    pub fn powu(self, n: u32) -> Self {
        if n == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return Self::ZERO;
        }
        Self::new(self.log_modulus * n as f64, self.phase * n as f64)
    }

    /// Principal real power.
    pub fn powf(self, e: f64) -> Self {
        if self.is_zero() {
            return if e == 0.0 { Self::ONE } else { Self::ZERO };
        }
        let p = if self.phase > std::f64::consts::PI { self.phase - TAU } else { self.phase };
        Self::new(self.log_modulus * e, p * e)
    }

    pub fn recip(self) -> Self {
        Self::new(-self.log_modulus, -self.phase)
    }

    pub fn scale_real(self, x: f64) -> Self {
        self * LogScalar::from_real(x)
    }
}

impl Mul for LogScalar {
    type Output = LogScalar;
    fn mul(self, rhs: LogScalar) -> LogScalar {
        if self.is_zero() || rhs.is_zero() {
            return LogScalar::ZERO;
        }
        LogScalar::new(self.log_modulus + rhs.log_modulus, self.phase + rhs.phase)
    }
}

impl Div for LogScalar {
    type Output = LogScalar;
    fn div(self, rhs: LogScalar) -> LogScalar {
        if rhs.is_zero() {
            return LogScalar { log_modulus: f64::INFINITY, phase: f64::NAN };
        }
        self * rhs.recip()
    }
}

impl Neg for LogScalar {
    type Output = LogScalar;
    fn neg(self) -> LogScalar {
        if self.is_zero() {
            return self;
        }
        LogScalar::new(self.log_modulus, self.phase + std::f64::consts::PI)
    }
}

impl Add for LogScalar {
    type Output = LogScalar;
    fn add(self, rhs: LogScalar) -> LogScalar {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.log_modulus >= rhs.log_modulus { (self, rhs) } else { (rhs, self) };
        let r = (small.log_modulus - big.log_modulus).exp();
        if r == 0.0 {
            return big;
        }
        let th = small.phase - big.phase;
        let (s, c) = th.sin_cos();
        let sum = Complex64::new(1.0 + r * c, r * s);
        let q = 2.0 * r * c + r * r;
        let ln_abs = if q > -0.5 {
            0.5 * q.ln_1p()
        } else {
            let n = sum.norm();
            // below the rounding floor of the phases: exact cancellation
            if n < 4.0 * f64::EPSILON {
                return LogScalar::ZERO;
            }
            n.ln()
        };
        LogScalar::new(big.log_modulus + ln_abs, big.phase + sum.im.atan2(sum.re))
    }
}

impl Sub for LogScalar {
    type Output = LogScalar;
    fn sub(self, rhs: LogScalar) -> LogScalar {
        self + (-rhs)
    }
}

/// Field operations shared by `Complex64` and [`LogScalar`], so every map
/// formula is written once and evaluated in either representation.
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_c64(z: Complex64) -> Self;
    fn from_log(l: LogScalar) -> Self;
    fn to_c64(self) -> Complex64;
    fn to_log(self) -> LogScalar;
    fn powu(self, n: u32) -> Self;
    /// `ln|z|`, `-inf` at zero.
    fn ln_abs(self) -> f64;
    fn finite(self) -> bool;
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_c64(z: Complex64) -> Self {
        z
    }
    fn from_log(l: LogScalar) -> Self {
        l.to_complex()
    }
    fn to_c64(self) -> Complex64 {
        self
    }
    fn to_log(self) -> LogScalar {
        LogScalar::from_complex(self)
    }
    fn powu(self, n: u32) -> Self {
        Complex64::powu(&self, n)
    }
    fn ln_abs(self) -> f64 {
        self.norm().ln()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Scalar for LogScalar {
    fn zero() -> Self {
        LogScalar::ZERO
    }
    fn one() -> Self {
        LogScalar::ONE
    }
    fn from_c64(z: Complex64) -> Self {
        LogScalar::from_complex(z)
    }
    fn from_log(l: LogScalar) -> Self {
        l
    }
    fn to_c64(self) -> Complex64 {
        self.to_complex()
    }
    fn to_log(self) -> LogScalar {
        self
    }
    fn powu(self, n: u32) -> Self {
        LogScalar::powu(self, n)
    }
    fn ln_abs(self) -> f64 {
        self.log_modulus
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn roundtrip_complex() {
        let z = Complex64::new(-0.3, 1.7);
        assert!(close(LogScalar::from_complex(z).to_complex(), z, 1e-15));
        assert!(LogScalar::from_complex(Complex64::new(0.0, 0.0)).is_zero());
    }

    #[test]
    fn arithmetic_matches_complex() {
        let a = Complex64::new(1.25, -0.5);
        let b = Complex64::new(-0.75, 2.0);
        let (la, lb) = (LogScalar::from_complex(a), LogScalar::from_complex(b));
        assert!(close((la + lb).to_complex(), a + b, 1e-14));
        assert!(close((la - lb).to_complex(), a - b, 1e-14));
        assert!(close((la * lb).to_complex(), a * b, 1e-14));
        assert!(close((la / lb).to_complex(), a / b, 1e-14));
        assert!(close(la.powu(5).to_complex(), a.powu(5), 1e-14));
    }

    #[test]
    fn exact_cancellation_is_zero() {
        let a = LogScalar::from_real(3.0);
        assert!((a - a).is_zero());
    }

    #[test]
    fn tower_stays_representable() {
        // 0.5^(2^40) underflows any double but not the log form
        let t = LogScalar::real_pow(0.5, 2f64.powi(40));
        assert!(t.modulus() == 0.0);
        assert!((t.log_modulus - 2f64.powi(40) * 0.5f64.ln()).abs() < 1e-3);
        assert!(!t.is_zero());
    }

    #[test]
    fn negative_real_phase() {
        let m = LogScalar::from_real(-2.0);
        assert!((m.phase - std::f64::consts::PI).abs() < 1e-15);
        assert!(close(m.to_complex(), Complex64::new(-2.0, 0.0), 1e-15));
    }
}
