use crate::error::{Error, Result};
use crate::Scalar;

/// Central-difference gradient of `f` at `theta` with step `h`.
///
/// Fails on the first non-finite evaluation, naming the coordinate.
pub fn finite_diff_gradient<T, F>(mut f: F, theta: &[T], h: T) -> Result<Vec<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    assert!(h > T::zero(), "finite difference step must be positive");
    let mut point = theta.to_vec();
    let two_h = h + h;
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = point[i];
        point[i] = orig + h;
        let plus = f(&point);
        point[i] = orig - h;
        let minus = f(&point);
        point[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite difference evaluation at coordinate {i}: f(+h)={plus}, f(-h)={minus}"
            )));
        }
        grad.push((plus - minus) / two_h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_diff_gradient(|t: &[f64]| t[0] * t[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_is_zero() {
        let g = finite_diff_gradient(|_: &[f64]| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn tanh_sum() {
        let g = finite_diff_gradient(|t: &[f64]| t.iter().map(|v| v.tanh()).sum(), &[0.5], 1e-5).unwrap();
        let th = 0.5f64.tanh();
        assert!((g[0] - (1.0 - th * th)).abs() < 1e-8);
        assert!((g[0] - 0.78645).abs() < 1e-5);
    }

    #[test]
    fn second_degree_polynomial_exact_to_rounding() {
        // f = 2x² - 3xy + y + 7
        let f = |t: &[f64]| 2.0 * t[0] * t[0] - 3.0 * t[0] * t[1] + t[1] + 7.0;
        let g = finite_diff_gradient(f, &[1.5, -0.5], 1e-4).unwrap();
        assert!((g[0] - (4.0 * 1.5 + 1.5)).abs() < 1e-8);
        assert!((g[1] - (-3.0 * 1.5 + 1.0)).abs() < 1e-8);
    }

    #[test]
    fn non_finite_names_index() {
        let err = finite_diff_gradient(
            |t: &[f64]| if t[1] > 1.0005 { f64::NAN } else { t[0] },
            &[0.0, 1.0],
            1e-3,
        )
        .unwrap_err();
        assert!(err.to_string().contains("coordinate 1"), "{err}");
    }
}
