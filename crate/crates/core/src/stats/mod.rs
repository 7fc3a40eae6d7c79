//! Numeric building blocks for the causal module.

pub mod ols;
pub mod special;

pub use ols::{fit as ols_fit, Design, OlsError, OlsFit};
pub use special::{f_survival, ln_beta, ln_gamma, reg_inc_beta};

use crate::scalar::Scalar;

pub fn mean<F: Scalar>(v: &[F]) -> F {
    if v.is_empty() {
        return F::zero();
    }
    v.iter().copied().sum::<F>() / F::from_count(v.len())
}

/// Population variance.
pub fn variance<F: Scalar>(v: &[F]) -> F {
    if v.is_empty() {
        return F::zero();
    }
    let m = mean(v);
    v.iter().map(|&x| (x - m) * (x - m)).sum::<F>() / F::from_count(v.len())
}
