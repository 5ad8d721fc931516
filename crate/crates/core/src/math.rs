//! Scalar type and the handful of transcendental functions the engine needs.
//!
//! `core` has no float intrinsics for `exp`/`ln`/`tanh`, so everything goes
//! through `libm`.

#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

#[cfg(not(feature = "f32"))]
mod imp {
    use super::Real;
    #[inline]
    pub fn exp(x: Real) -> Real {
        libm::exp(x)
    }
    #[inline]
    pub fn ln(x: Real) -> Real {
        libm::log(x)
    }
    #[inline]
    pub fn ln_1p(x: Real) -> Real {
        libm::log1p(x)
    }
    #[inline]
    pub fn tanh(x: Real) -> Real {
        libm::tanh(x)
    }
    #[inline]
    pub fn sqrt(x: Real) -> Real {
        libm::sqrt(x)
    }
    #[inline]
    pub fn powi(x: Real, n: i32) -> Real {
        libm::pow(x, n as Real)
    }
}

#[cfg(feature = "f32")]
mod imp {
    use super::Real;
    #[inline]
    pub fn exp(x: Real) -> Real {
        libm::expf(x)
    }
    #[inline]
    pub fn ln(x: Real) -> Real {
        libm::logf(x)
    }
    #[inline]
    pub fn ln_1p(x: Real) -> Real {
        libm::log1pf(x)
    }
    #[inline]
    pub fn tanh(x: Real) -> Real {
        libm::tanhf(x)
    }
    #[inline]
    pub fn sqrt(x: Real) -> Real {
        libm::sqrtf(x)
    }
    #[inline]
    pub fn powi(x: Real, n: i32) -> Real {
        libm::powf(x, n as Real)
    }
}

pub use imp::*;

/// `ln(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus(x: Real) -> Real {
    let pos = if x > 0.0 { x } else { 0.0 };
    let neg_abs = if x > 0.0 { -x } else { x };
    pos + ln_1p(exp(neg_abs))
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Sum in a canonical order: ascending by IEEE total order. The result depends
/// only on the multiset of inputs, never on their arrangement.
pub fn canonical_sum(values: &mut [Real]) -> Real {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    values.iter().fold(0.0, |acc, v| acc + v)
}
