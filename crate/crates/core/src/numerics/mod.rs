//! Forward-only neural primitives over [`Tensor`](crate::Tensor).

mod conv;
mod norm;

pub use conv::{conv2d, conv_transpose2d, ConvSpec};
pub use norm::{instance_norm, NormParams};

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_inverse_pair() {
        for &y in &[1e-6, 0.1, 1.0, 5.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
