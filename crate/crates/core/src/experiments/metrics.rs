use ndarray::{ArrayView2, Zip};

use crate::error::{Error, Result};

fn same_shape(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `sqrt((1/M) sum_j ||a_hat_j - a_star_j||^2)`, i.e. the Frobenius distance
/// scaled by `1/sqrt(M)` where `M` is the number of columns.
pub fn network_rmse(a_hat: ArrayView2<'_, f64>, a_star: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(a_hat, a_star)?;
    if a_hat.ncols() == 0 {
        return Err(Error::Shape("empty network".into()));
    }
    let mut sq = 0.0;
    Zip::from(a_hat).and(a_star).for_each(|a, b| sq += (a - b) * (a - b));
    Ok((sq / a_hat.ncols() as f64).sqrt())
}

/// Column-wise root mean squared error.
pub fn per_node_rmse(pred: ArrayView2<'_, f64>, actual: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    same_shape(pred, actual)?;
    if pred.nrows() == 0 {
        return Err(Error::Shape("no rows".into()));
    }
    let n = pred.nrows() as f64;
    Ok(pred
        .columns()
        .into_iter()
        .zip(actual.columns())
        .map(|(p, a)| {
            let sq: f64 = p.iter().zip(a).map(|(p, a)| (p - a) * (p - a)).sum();
            (sq / n).sqrt()
        })
        .collect())
}

/// Mean squared error over every entry.
pub fn mean_squared_error(pred: ArrayView2<'_, f64>, actual: ArrayView2<'_, f64>) -> Result<f64> {
    same_shape(pred, actual)?;
    if pred.is_empty() {
        return Err(Error::Shape("no entries".into()));
    }
    let mut sq = 0.0;
    Zip::from(pred).and(actual).for_each(|p, a| sq += (p - a) * (p - a));
    Ok(sq / pred.len() as f64)
}
