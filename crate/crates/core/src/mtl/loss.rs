//! Output nonlinearities and the two task losses.

/// Max-shifted softmax; never overflows.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood over class slots. Each slot is one categorical
/// prediction (one pair of one sample) with its true class index.
pub fn loss_classification(predictions: &[Vec<f64>], labels: &[usize]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if predictions.is_empty() {
        return 0.0;
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / predictions.len() as f64
}

pub fn loss_regression(predictions: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    if predictions.is_empty() {
        return 0.0;
    }
    predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / predictions.len() as f64
}

pub fn loss_total(cls: f64, reg: f64, xi_c: f64, xi_r: f64) -> f64 {
    xi_c * cls + xi_r * reg
}

/// Difference on the unit circle of normalized phases, in `[−0.5, 0.5)`.
pub fn circular_diff(a: f64, b: f64) -> f64 {
    (a - b + 0.5).rem_euclid(1.0) - 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[LN_2, 0.0]);
        assert_relative_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], 1.0 / 3.0, epsilon = 1e-15);
        let p = softmax(&[1000.0, -1000.0, 999.0]);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0), 0.5);
        for z in [-3.0, -0.1, 0.7, 12.0] {
            assert_relative_eq!(sigmoid(-z), 1.0 - sigmoid(z), epsilon = 1e-15);
        }
        assert!(sigmoid(50.0) <= 1.0 && sigmoid(-50.0) > 0.0);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn classification_loss_examples() {
        assert_eq!(loss_classification(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[1, 0]), 0.0);
        assert_relative_eq!(loss_classification(&vec![vec![0.5, 0.5]; 4], &[0, 1, 1, 0]), LN_2, epsilon = 1e-15);
        // hand evaluated: (−ln 0.8 − ln 0.4 − ln 0.9) / 3
        let p = vec![vec![0.2, 0.8], vec![0.4, 0.6], vec![0.9, 0.1]];
        assert_relative_eq!(loss_classification(&p, &[1, 0, 0]), 0.41493159961539705, epsilon = 1e-15);
    }

    #[test]
    fn regression_loss_examples() {
        assert_eq!(loss_regression(&[0.1, 0.2], &[0.1, 0.2]), 0.0);
        assert_relative_eq!(loss_regression(&[0.3, 0.5, 0.9], &[0.2, 0.4, 0.8]), 0.01, epsilon = 1e-15);
        // (0.01 + 0.04 + 0.25) / 3
        assert_relative_eq!(loss_regression(&[0.1, 0.6, 0.0], &[0.2, 0.4, 0.5]), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn total_loss_is_linear() {
        assert_eq!(loss_total(0.7, 0.2, 1.0, 0.0), 0.7);
        assert_relative_eq!(loss_total(0.7, 0.2, 0.5, 0.5), 0.45);
        let (a, b) = (0.31, 1.7);
        assert_relative_eq!(
            loss_total(2.0 * a, 2.0 * b, 0.3, 0.9),
            2.0 * loss_total(a, b, 0.3, 0.9),
            epsilon = 1e-15
        );
    }

    #[test]
    fn circular_diff_wraps() {
        assert_relative_eq!(circular_diff(0.95, 0.05), -0.1, epsilon = 1e-12);
        assert_relative_eq!(circular_diff(0.3, 0.1), 0.2, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            z in proptest::collection::vec(-700.0f64..700.0, 1..8),
            c in -300.0f64..300.0,
        ) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
