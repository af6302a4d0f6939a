use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Probability floor applied before taking the log.
const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax.
///
/// Entries are kept strictly inside (0, 1): exponentials that underflow are
/// raised to the smallest positive normal and a saturated class is held one
/// epsilon below 1. The row sum then stays within a few epsilon of 1.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let hi = T::one() - T::epsilon();
    exps.into_iter()
        .map(|e| (e / sum).max(T::min_positive_value()).min(hi))
        .collect()
}

/// Mean categorical cross-entropy over a row-major `B x n_classes` block.
pub fn cross_entropy<T: Scalar>(probs: &[T], n_classes: usize, labels: &[usize]) -> Result<T> {
    if n_classes == 0 || probs.len() != labels.len() * n_classes {
        return Err(Error::Shape(format!(
            "{} probabilities do not match {} labels over {n_classes} classes",
            probs.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Domain("cross-entropy of an empty batch".into()));
    }
    let floor = T::of(PROB_FLOOR);
    let mut total = T::zero();
    for (row, &label) in probs.chunks(n_classes).zip(labels) {
        if label >= n_classes {
            return Err(Error::Domain(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
        total -= row[label].max(floor).ln();
    }
    Ok(total / T::of(labels.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = [0.0, 1.0, 0.0];
        assert_eq!(cross_entropy(&p, 3, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_nine_class_loss_is_ln9() {
        let p = [1.0 / 9.0; 9];
        let l = cross_entropy(&p, 9, &[4]).unwrap();
        assert!((l - 9f64.ln()).abs() < 1e-12);
        assert!((l - 2.19722).abs() < 1e-5);
    }

    #[test]
    fn batch_mean() {
        let p = [0.5, 0.5, 0.25, 0.75];
        let a = -(0.5f64).ln();
        let b = -(0.75f64).ln();
        let l = cross_entropy(&p, 2, &[0, 1]).unwrap();
        assert!((l - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn floor_caps_zero_probability() {
        let l = cross_entropy(&[0.0, 1.0], 2, &[0]).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_label() {
        assert!(matches!(cross_entropy(&[0.5, 0.5], 2, &[2]), Err(Error::Domain(_))));
    }

    #[test]
    fn softmax_stays_open_interval() {
        let p = softmax(&[1000.0f32, -1000.0, 0.0]);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let s: f32 = p.iter().sum();
        assert!((s - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn softmax_zero_logits_uniform() {
        let p = softmax(&[0.0f64; 9]);
        for v in p {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
    }
}
