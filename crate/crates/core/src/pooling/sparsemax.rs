//! Euclidean projection onto the probability simplex.

/// Sparsemax of `z`: the closest point (in L2) to `z` on the simplex
/// `{p : p ≥ 0, Σp = 1}`.
///
/// Closed form: sort descending, take the largest `k` with
/// `1 + k·z₍ₖ₎ > Σ_{j≤k} z₍ⱼ₎`, set `τ = (Σ_{j≤k} z₍ⱼ₎ − 1) / k` and return
/// `[z − τ]₊`. Returns an empty vector for empty input.
pub fn sparsemax(z: &[f64]) -> Vec<f64> {
    let tau = match threshold(z) {
        Some(t) => t,
        None => return Vec::new(),
    };
    z.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// The threshold `τ(z)` applied by [`sparsemax`].
pub fn threshold(z: &[f64]) -> Option<f64> {
    if z.is_empty() {
        return None;
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support = 0usize;
    let mut support_sum = 0.0;
    for (idx, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k = (idx + 1) as f64;
        if 1.0 + k * v > cumsum {
            support = idx + 1;
            support_sum = cumsum;
        }
    }
    // support >= 1 always: for k = 1 the test reads 1 + z₍₁₎ > z₍₁₎.
    Some((support_sum - 1.0) / support as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_is_fixed_point() {
        assert_eq!(sparsemax(&[0.0, 1.0, 0.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_coordinates() {
        let p = sparsemax(&[1.0, 0.5]);
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn truncates_below_threshold() {
        assert_eq!(sparsemax(&[2.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
        assert_eq!(threshold(&[2.0, 0.0, 0.0]), Some(1.0));
    }

    #[test]
    fn uniform_input_gives_uniform_output() {
        let p = sparsemax(&[3.0; 4]);
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_coordinate_is_one() {
        assert_eq!(sparsemax(&[-7.5]), vec![1.0]);
    }

    #[test]
    fn empty_input() {
        assert!(sparsemax(&[]).is_empty());
    }
}
