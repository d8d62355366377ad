//! Sparse projections: hard thresholding, orthogonal complements, sparse unit normalization.

use crate::error::{domain, Error, Result};
use crate::math::linalg::{dot, norm2};

/// Keeps the `s` entries of largest magnitude and zeroes the rest.
///
/// Magnitude ties are resolved in favour of the lower index.
pub fn hard_threshold(v: &[f64], s: usize) -> Result<Vec<f64>> {
    if s == 0 || s > v.len() {
        return domain(format!("sparsity {s} outside 1..={} for hard thresholding", v.len()));
    }
    if v.iter().any(|x| x.is_nan()) {
        return domain("NaN in hard-threshold input");
    }
    let mut out = vec![0.0; v.len()];
    for i in top_indices(v, s) {
        out[i] = v[i];
    }
    Ok(out)
}

/// Indices of the `s` largest-magnitude entries, ascending index order.
pub(crate) fn top_indices(v: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    // stable sort keeps lower index first among equal magnitudes
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    idx.truncate(s);
    idx.sort_unstable();
    idx
}

/// `x - (<u,x>/<u,u>) u`: the component of `x` orthogonal to `u`.
pub fn orth_project(u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if u.len() != x.len() {
        return domain("orth_project: length mismatch");
    }
    let uu = dot(u, u);
    if uu == 0.0 || !uu.is_finite() {
        return domain("orth_project: reference vector has zero or non-finite norm");
    }
    let c = dot(u, x) / uu;
    Ok(x.iter().zip(u).map(|(xi, ui)| xi - c * ui).collect())
}

/// Hard-threshold to `s` entries then rescale to unit Euclidean norm.
///
/// Returns [`Error::DegenerateDirection`] when nothing nonzero survives.
pub fn sparse_normalize(v: &[f64], s: usize) -> Result<Vec<f64>> {
    let mut t = hard_threshold(v, s)?;
    let n = norm2(&t);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    for x in &mut t {
        *x /= n;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        assert_eq!(
            hard_threshold(&[3.0, -1.0, 0.5, -4.0], 2).unwrap(),
            vec![3.0, 0.0, 0.0, -4.0]
        );
        assert_eq!(hard_threshold(&[1.0, 1.0, 1.0], 2).unwrap(), vec![1.0, 1.0, 0.0]);
        let sparse = [0.0, 2.0, 0.0, -1.0];
        assert_eq!(hard_threshold(&sparse, 2).unwrap(), sparse.to_vec());
        assert!(hard_threshold(&[1.0], 0).is_err());
        assert!(hard_threshold(&[1.0], 2).is_err());
    }

    #[test]
    fn orth_examples() {
        assert_eq!(orth_project(&[1.0, 0.0], &[1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
        let p = orth_project(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(norm2(&p), 0.0, epsilon = 1e-15);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let p = orth_project(&[r, r], &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], -0.5, epsilon = 1e-15);
        assert!(orth_project(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            sparse_normalize(&[0.0, 3.0, 0.0, 4.0], 1).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(sparse_normalize(&[0.0, 0.0], 1), Err(Error::DegenerateDirection));
        let u = sparse_normalize(&[1.0, 1.0], 2).unwrap();
        assert_abs_diff_eq!(u[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.5f64.sqrt(), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn projection_is_orthogonal(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30)
        ) {
            let u: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let x: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            prop_assume!(norm2(&u) > 1e-3);
            let p = orth_project(&u, &x).unwrap();
            prop_assert!(dot(&p, &u).abs() <= 1e-12 * norm2(&x) * norm2(&u).max(1.0));
        }

        #[test]
        fn normalized_is_unit_and_sparse(
            v in prop::collection::vec(-10.0f64..10.0, 1..30), s in 1usize..30
        ) {
            prop_assume!(s <= v.len());
            if let Ok(u) = sparse_normalize(&v, s) {
                prop_assert!((norm2(&u) - 1.0).abs() < 1e-12);
                prop_assert!(u.iter().filter(|x| **x != 0.0).count() <= s);
            }
        }
    }
}
