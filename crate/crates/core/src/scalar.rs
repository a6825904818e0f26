//! Scalar abstraction shared by the dense numerics.
//!
//! Everything that only needs field arithmetic, square roots and the
//! trigonometric functions is written against [`Real`], so the same code runs
//! in `f32` or `f64`. The tolerance-heavy layers (certificates, hierarchy,
//! measures) are concrete in `f64`; see the aliases in the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating-point scalar used by the generic numerics.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Unit roundoff of the type.
    fn unit_roundoff() -> Self {
        Self::epsilon()
    }

    /// Converts an `f64` literal; panics only for values the type cannot hold at all.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e(t) = exp(2πi t)`.
pub fn e2pi<T: Real>(t: T) -> Complex<T> {
    let theta = T::TAU() * t;
    Complex::new(theta.cos(), theta.sin())
}

/// Complex cosine through exponentials, stable for large imaginary parts.
pub fn complex_cos<T: Real>(z: Complex<T>) -> Complex<T> {
    let iz = Complex::new(-z.im, z.re);
    let half = T::lit(0.5);
    (iz.exp() + (-iz).exp()) * half
}

/// Complex sine through exponentials.
pub fn complex_sin<T: Real>(z: Complex<T>) -> Complex<T> {
    let iz = Complex::new(-z.im, z.re);
    let denom = Complex::new(T::zero(), T::lit(2.0));
    (iz.exp() - (-iz).exp()) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_cos_matches_cosh_on_imaginary_axis() {
        let y = 0.37_f64;
        let c = complex_cos(Complex::new(0.0, std::f64::consts::TAU * y));
        assert!((c.re - (std::f64::consts::TAU * y).cosh()).abs() < 1e-14);
        assert!(c.im.abs() < 1e-15);
    }

    #[test]
    fn complex_trig_reduces_to_real() {
        for &x in &[0.0_f32, 0.3, 1.7, -2.2] {
            let c = complex_cos(Complex::new(x, 0.0));
            let s = complex_sin(Complex::new(x, 0.0));
            assert!((c.re - x.cos()).abs() < 1e-6);
            assert!((s.re - x.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn e2pi_quarter_turn() {
        let z = e2pi(0.25_f64);
        assert!(z.re.abs() < 1e-15 && (z.im - 1.0).abs() < 1e-15);
    }
}
