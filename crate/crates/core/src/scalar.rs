//! Scalar abstractions shared by the statistics, learner and solver.
//!
//! Count-derived statistics (ratios, smoothed priors) only need field
//! arithmetic and are generic over [`Scalar`], which admits exact rationals.
//! The perceptron and the ILP solver need `exp`, `max` and friends and are
//! generic over [`Real`].

use std::fmt::Debug;

use num_rational::{BigRational, Ratio};
use num_traits::{Float, Num};

pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync {
    fn from_count(n: u64) -> Self;

    /// Lossy view used for reporting and tolerance checks.
    fn as_f64(&self) -> f64;
}

macro_rules! float_scalar {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn from_count(n: u64) -> Self {
                n as $t
            }

            #[inline]
            fn as_f64(&self) -> f64 {
                *self as f64
            }
        }
    )*};
}

float_scalar!(f32, f64);

impl Scalar for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        let n = i64::try_from(n).expect("count exceeds i64 range");
        Ratio::from_integer(n)
    }

    fn as_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Scalar for Ratio<i128> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(n as i128)
    }

    fn as_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Scalar for BigRational {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(n.into())
    }

    fn as_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Floating-point scalar for learned weights, soft-max scores and objectives.
pub trait Real: Scalar + Float + Default {
    fn from_f64(x: f64) -> Self;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
}
