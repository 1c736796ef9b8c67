//! Scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rustfft::FftNum;

/// Floating point scalar the numerical core is generic over.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + FftNum + Sum<Self> + Debug + Display + LowerExp + Default
{
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn pi() -> Self {
        rf(std::f64::consts::PI)
    }

    fn two_pi() -> Self {
        rf(std::f64::consts::TAU)
    }
}

impl Real for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        f64::standard_normal(rng) as f32
    }

    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }
}

impl Real for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        // Marsaglia polar method; avoids a rand_distr dependency and is
        // deterministic given the stream.
        loop {
            let u = 2.0 * rng.gen::<f64>() - 1.0;
            let v = 2.0 * rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }
}

/// Shorthand conversion from f64 literals into the generic scalar.
#[inline]
pub fn rf<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 -> scalar conversion")
}

/// Lossy conversion back to f64 (exact for f64, widening for f32).
#[inline]
pub fn tf<F: Real>(x: F) -> f64 {
    x.to_f64().expect("scalar -> f64 conversion")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normal_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let g = f64::standard_normal(&mut rng);
            m1 += g;
            m2 += g * g;
        }
        m1 /= n as f64;
        m2 /= n as f64;
        assert!(m1.abs() < 0.01, "mean {m1}");
        assert!((m2 - 1.0).abs() < 0.02, "second moment {m2}");
    }
}
