//! Training schedules: KL annealing and the Noam learning rate.

/// KL weight λ: linear from 0 to 1 over the first half of training, then
/// constant at 1.
pub fn kl_weight(step: u64, total_steps: u64) -> f64 {
    assert!(total_steps > 0);
    let half = 0.5 * total_steps as f64;
    (step as f64 / half).min(1.0)
}

/// Noam schedule: base · min(step^-1/2, step · w^-3/2), peaking at step = w.
pub fn lr_schedule(step: u64, warmup: u64, base: f64) -> f64 {
    assert!(step >= 1 && warmup >= 1);
    let s = step as f64;
    let w = warmup as f64;
    base * (s.powf(-0.5)).min(s * w.powf(-1.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_weight_anchors() {
        assert_eq!(kl_weight(0, 100), 0.0);
        assert_eq!(kl_weight(50, 100), 1.0);
        assert_eq!(kl_weight(25, 100), 0.5);
        assert_eq!(kl_weight(100, 100), 1.0);
    }

    #[test]
    fn kl_weight_grid_of_101_steps() {
        let total = 100;
        for step in 0..=total {
            let expected = (step as f64 / (0.5 * total as f64)).min(1.0);
            assert_eq!(kl_weight(step, total), expected);
        }
    }

    #[test]
    fn lr_peak_and_warmup() {
        let w = 400;
        let base = 1e-3;
        let peak = lr_schedule(w, w, base);
        assert!((peak - base * (w as f64).powf(-0.5)).abs() < 1e-18);
        // Half way through warmup: half the peak.
        let half = lr_schedule(w / 2, w, base);
        assert!((half - 0.5 * peak).abs() < 1e-15);
    }

    #[test]
    fn lr_monotone_after_peak() {
        let w = 100;
        let mut prev = lr_schedule(w, w, 1.0);
        for step in (w + 1)..(w + 500) {
            let cur = lr_schedule(step, w, 1.0);
            assert!(cur < prev, "not decreasing at step {step}");
            prev = cur;
        }
        // And non-decreasing before it.
        let mut prev = lr_schedule(1, w, 1.0);
        for step in 2..=w {
            let cur = lr_schedule(step, w, 1.0);
            assert!(cur >= prev);
            prev = cur;
        }
    }
}
