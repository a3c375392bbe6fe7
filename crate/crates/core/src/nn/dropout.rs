//! Inverted dropout: kept units are scaled by `1/(1 − p)` so the expected
//! activation is unchanged and evaluation needs no rescaling.

use ndarray::Array2;

use crate::rng::RngStream;

/// Applies dropout in place and returns the scale mask (entries `0` or
/// `1/(1 − p)`), or `None` when `p == 0`. No random draws happen for `p == 0`.
pub fn dropout_in_place(x: &mut Array2<f64>, p: f64, rng: &mut RngStream) -> Option<Array2<f64>> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
        if rng.uniform() < p {
            0.0
        } else {
            keep
        }
    });
    *x *= &mask;
    Some(mask)
}
