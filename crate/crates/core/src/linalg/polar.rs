use super::{gram, jacobi_eigh, matmul, DenseMatrix};
use crate::error::{invalid, Error, Result};

/// Relative threshold on the smallest eigenvalue of `x^T x`.
const RANK_TOL: f64 = 1e-14;

/// Orthonormal polar factor `x (x^T x)^{-1/2}`, through a Jacobi
/// eigendecomposition of the Gram matrix.
pub fn polar_factor(x: &DenseMatrix) -> Result<DenseMatrix> {
    polar_factor_counted(x).map(|(q, _)| q)
}

/// Same as [`polar_factor`], also returning the number of Jacobi rotations spent.
pub(crate) fn polar_factor_counted(x: &DenseMatrix) -> Result<(DenseMatrix, usize)> {
    let (d, r) = x.shape();
    if d < r {
        return Err(invalid(format!("polar_factor needs rows >= cols, got {d}x{r}")));
    }
    let s = gram(x)?;
    let eig = jacobi_eigh(&s)?;
    let lmax = eig.eigenvalues.first().copied().unwrap_or(0.0);
    let lmin = eig.eigenvalues.last().copied().unwrap_or(0.0);
    let threshold = RANK_TOL * lmax;
    if lmin <= threshold || lmax <= 0.0 {
        return Err(Error::RankDeficient { op: "polar_factor", pivot: lmin, threshold });
    }
    let inv_sqrt = eig.reconstruct_with(|l| 1.0 / l.sqrt());
    Ok((matmul(x, &inv_sqrt)?, eig.rotations))
}

/// Applies `f` to the spectrum of a symmetric matrix: `V diag(f(lambda)) V^T`.
pub fn spectral_map(s: &DenseMatrix, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
    Ok(jacobi_eigh(s)?.reconstruct_with(f))
}
