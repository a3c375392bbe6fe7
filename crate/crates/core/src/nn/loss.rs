//! Binary cross-entropy on clamped probabilities.

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−[y·ln z + (1 − y)·ln(1 − z)]` with `z` clamped.
pub fn bce_loss(y: f64, z: f64) -> f64 {
    let z = z.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * z.ln() + (1.0 - y) * (1.0 - z).ln())
}

/// `∂loss/∂z`; zero where the clamp is active.
pub fn bce_backward(y: f64, z: f64) -> f64 {
    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&z) {
        return 0.0;
    }
    -y / z + (1.0 - y) / (1.0 - z)
}

/// Loss and `∂loss/∂logit` for `z = sigmoid(logit)`.
///
/// Fuses [`bce_backward`] with the sigmoid derivative, which simplifies to
/// `z − y` away from the clamp.
pub fn sigmoid_bce(y: f64, logit: f64) -> (f64, f64) {
    let z = sigmoid(logit);
    let grad = if (BCE_EPS..=1.0 - BCE_EPS).contains(&z) {
        z - y
    } else {
        0.0
    };
    (bce_loss(y, z), grad)
}
