//! Small dense helpers shared by the estimators.

/// Sequential left-to-right dot product.
///
/// Every inner product of a data row with a direction goes through here so
/// that training and prediction see bit-identical linear predictors.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix given as a
/// closure computing `y = S x`, by power iteration.
pub fn power_iteration<F>(dim: usize, mut apply: F, tol: f64, max_iter: usize) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut y = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        apply(&x, &mut y);
        let next = dot(&x, &y);
        let n = norm2(&y);
        if n == 0.0 {
            return 0.0;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / n;
        }
        let converged = (next - lambda).abs() <= tol * next.abs().max(1.0);
        lambda = next;
        if converged {
            break;
        }
    }
    lambda
}
