use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn tanh_activation<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|v| v.tanh()).collect()
}

/// `log Σ exp(x)` with max subtraction. Panics on empty input.
pub fn log_sum_exp<T: Scalar>(x: &[T]) -> T {
    assert!(!x.is_empty(), "log_sum_exp of an empty slice");
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = x.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-probabilities of a softmax over `scores`. Panics on empty input.
pub fn log_softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|&s| s - lse).collect()
}

pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    assert!(!scores.is_empty(), "softmax of an empty slice");
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tanh_examples() {
        assert_eq!(tanh_activation(&[0.0f64]), vec![0.0]);
        assert!((tanh_activation(&[1e6f64])[0] - 1.0).abs() < 1e-12);
        // tanh(0.5) = (e - 1) / (e + 1)
        let e = 1f64.exp();
        let expected = (e - 1.0) / (e + 1.0);
        assert!((tanh_activation(&[0.5f64])[0] - expected).abs() < 1e-15);
        assert!((expected - 0.462_117_157_26).abs() < 1e-11);
    }

    #[test]
    fn log_softmax_examples() {
        for c in [-7.0f64, 0.0, 3.5, 1000.0] {
            for v in log_softmax(&[c, c, c]) {
                assert!((v + 3f64.ln()).abs() < 1e-12);
            }
        }
        assert_eq!(log_softmax(&[42.0f64]), vec![0.0]);
        let e = 1f64.exp();
        let e2 = 2f64.exp();
        let got = log_softmax(&[1.0f64, 2.0]);
        assert!((got[0] - (e / (e + e2)).ln()).abs() < 1e-14);
        assert!((got[1] - (e2 / (e + e2)).ln()).abs() < 1e-14);
        assert!((got[0] + 1.31326).abs() < 1e-5);
        assert!((got[1] + 0.31326).abs() < 1e-5);
    }

    #[test]
    #[should_panic]
    fn log_softmax_empty_panics() {
        log_softmax::<f64>(&[]);
    }

    #[test]
    fn generic_over_f32() {
        let p = softmax(&[1.0f32, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn log_softmax_shift_invariant(s in prop::collection::vec(-20.0f64..20.0, 1..12), c in -1000.0f64..1000.0) {
            let a = log_softmax(&s);
            let shifted: Vec<f64> = s.iter().map(|v| v + c).collect();
            let b = log_softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let shifted: Vec<f64> = s.iter().map(|v| v + 1000.0).collect();
            let b = log_softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn log_softmax_normalizes(s in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let total: f64 = log_softmax(&s).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
