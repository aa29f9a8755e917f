//! Deterministic PCA by power iteration with deflation, for 2-D inspection
//! of feature or embedding clouds.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::heads::to_matrix;

pub const MAX_ITERS: usize = 1000;
pub const TOLERANCE: f64 = 1e-10;

/// Unit principal directions (one per row), largest variance first, each
/// signed so that its largest-magnitude loading is positive.
pub fn principal_directions(x: &Array2<f64>, out_dim: usize) -> Array2<f64> {
    let d = x.ncols();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let mut cov = centered.t().dot(&centered) / x.nrows() as f64;
    let mut dirs = Array2::zeros((out_dim, d));
    for k in 0..out_dim {
        let mut v = Array1::from_shape_fn(d, |j| 1.0 / (j + 1) as f64);
        v /= v.dot(&v).sqrt();
        let mut converged = false;
        for _ in 0..MAX_ITERS {
            let w = cov.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm <= f64::EPSILON * cov.iter().fold(1.0f64, |a, b| a.max(b.abs())) {
                break;
            }
            let next = w / norm;
            let delta = (&next - &v).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            v = next;
            if delta < TOLERANCE {
                converged = true;
                break;
            }
        }
        let lambda = v.dot(&cov.dot(&v));
        if !(lambda > 0.0) && !converged {
            break;
        }
        let pivot = v.iter().enumerate().fold(0, |best, (j, x)| if x.abs() > v[best].abs() { j } else { best });
        if v[pivot] < 0.0 {
            v.mapv_inplace(|x| -x);
        }
        let outer = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        cov = cov - outer * lambda;
        dirs.row_mut(k).assign(&v);
    }
    dirs
}

/// Centered data projected onto the top `out_dim` principal directions.
/// Zero-variance data maps every point to the origin.
pub fn project_pca<R: AsRef<[f64]>>(vectors: &[R], out_dim: usize) -> Result<Vec<Vec<f64>>> {
    if vectors.len() < 2 {
        return Err(Error::EmptyDataset("projection needs at least two vectors".into()));
    }
    if out_dim == 0 {
        return Err(Error::Config("projection dimension must be >= 1".into()));
    }
    let x = to_matrix(vectors)?;
    let dirs = principal_directions(&x, out_dim.min(x.ncols()));
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let p = (&x - &mean).dot(&dirs.t());
    Ok(p.rows()
        .into_iter()
        .map(|r| {
            let mut v: Vec<f64> = r.to_vec();
            v.resize(out_dim, 0.0);
            v
        })
        .collect())
}
