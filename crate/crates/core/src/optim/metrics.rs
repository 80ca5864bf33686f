//! Candidate scoring: coefficient of determination and the
//! complexity-penalized fitness.

/// R² = 1 − Σ(yᵢ−ŷᵢ)²/Σ(yᵢ−ȳ)².
///
/// Zero-variance targets resolve by convention: 1 when the residuals are
/// zero too, −∞ otherwise.
pub fn r2(y: &[f64], yhat: &[f64]) -> f64 {
    assert_eq!(y.len(), yhat.len(), "length mismatch");
    assert!(y.len() >= 2, "need at least two points");
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Fitness = R² − ω·complexity. Invalid candidates are assigned −∞ before
/// this is ever called.
pub fn fitness(r2: f64, complexity: usize, omega: f64) -> f64 {
    assert!(omega >= 0.0, "omega must be non-negative");
    r2 - omega * complexity as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_anchors() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(r2(&y, &y), 1.0);
        let mean = [2.0, 2.0, 2.0];
        assert_eq!(r2(&y, &mean), 0.0);
        let yhat = [1.0, 2.0, 4.0];
        assert!((r2(&y, &yhat) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn r2_zero_variance_convention() {
        let y = [5.0, 5.0, 5.0];
        assert_eq!(r2(&y, &y), 1.0);
        assert_eq!(r2(&y, &[5.0, 5.0, 5.1]), f64::NEG_INFINITY);
    }

    #[test]
    fn r2_permutation_invariance() {
        let y = [1.0, 4.0, 2.0, 8.0];
        let yhat = [1.5, 3.0, 2.5, 7.0];
        let a = r2(&y, &yhat);
        let perm = [2usize, 0, 3, 1];
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let yhp: Vec<f64> = perm.iter().map(|&i| yhat[i]).collect();
        assert!((a - r2(&yp, &yhp)).abs() < 1e-15);
    }

    #[test]
    fn fitness_formula() {
        assert_eq!(fitness(0.9, 10, 0.0), 0.9);
        assert!((fitness(0.9, 10, 0.01) - 0.8).abs() < 1e-15);
        // Strictly decreasing in complexity for positive omega.
        assert!(fitness(0.9, 11, 0.01) < fitness(0.9, 10, 0.01));
        // Argmax invariant to shifting all R² by a constant.
        let r2s = [0.3, 0.7, 0.5];
        let cx = [3usize, 8, 5];
        let argmax = |off: f64| {
            (0..3)
                .max_by(|&a, &b| {
                    fitness(r2s[a] + off, cx[a], 0.01)
                        .partial_cmp(&fitness(r2s[b] + off, cx[b], 0.01))
                        .unwrap()
                })
                .unwrap()
        };
        assert_eq!(argmax(0.0), argmax(5.0));
    }
}
