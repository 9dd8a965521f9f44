use super::matrix::fro_norm;
use super::DenseMatrix;
use crate::error::{Error, Result};

/// Sweep cap for the cyclic Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 100;

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_TOL: f64 = 1e-15;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct SymEigDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: DenseMatrix,
    pub sweeps: usize,
    pub rotations: usize,
}

impl SymEigDecomposition {
    /// `V diag(f(lambda)) V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v.get(i, k) * fl[k] * v.get(j, k);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Rotations follow Rutishauser's formulation. Iteration stops when the
/// off-diagonal mass falls below `1e-15 * ||c||_F`.
pub fn jacobi_eigh(c: &DenseMatrix) -> Result<SymEigDecomposition> {
    let (rows, cols) = c.shape();
    if rows != cols {
        return Err(Error::NotSquare { op: "jacobi_eigh", rows, cols });
    }
    c.ensure_finite("jacobi_eigh")?;
    let n = rows;
    let norm = fro_norm(c);
    let asym = c.asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOL * norm {
        return Err(Error::NotSymmetric { asymmetry: asym, tolerance: SYMMETRY_TOL * norm });
    }

    let mut a = c.as_slice().to_vec();
    // symmetrize so the rotation updates can rely on a[i][j] == a[j][i]
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    // rows of `vt` are the eigenvectors
    let mut vt = DenseMatrix::identity(n).into_vec();
    let target = OFF_TOL * norm;
    let mut sweeps = 0;
    let mut rotations = 0;

    loop {
        let off = off_diagonal_norm(&a, n);
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { op: "jacobi_eigh", sweeps });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let g = 100.0 * apq.abs();
                if sweeps > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() { 0.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let cth = 1.0 / (t * t + 1.0).sqrt();
                let s = t * cth;
                let tau = s / (1.0 + cth);
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let gk = a[k * n + p];
                    let hk = a[k * n + q];
                    let np = gk - s * (hk + gk * tau);
                    let nq = hk + s * (gk - hk * tau);
                    a[k * n + p] = np;
                    a[p * n + k] = np;
                    a[k * n + q] = nq;
                    a[q * n + k] = nq;
                }
                let (head, tail) = vt.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let gk = *x;
                    let hk = *y;
                    *x = gk - s * (hk + gk * tau);
                    *y = hk + s * (gk - hk * tau);
                }
                rotations += 1;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &vt[i * n..(i + 1) * n]);
    }
    Ok(SymEigDecomposition { eigenvalues, eigenvectors, sweeps, rotations })
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += a[i * n + j] * a[i * n + j];
        }
    }
    (2.0 * s).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, gram, Rng};

    #[test]
    fn diagonal_and_identity() {
        let e = jacobi_eigh(&DenseMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![2.0, 1.0]);
        assert_eq!(e.eigenvectors.get(0, 0).abs(), 1.0);
        assert_eq!(e.eigenvectors.get(1, 1).abs(), 1.0);
        let e = jacobi_eigh(&DenseMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![3.0, 1.0]);
        assert_eq!(e.eigenvectors.get(1, 0).abs(), 1.0);
        let e = jacobi_eigh(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn swap_matrix() {
        let c = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let e = jacobi_eigh(&c).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((e.eigenvalues[1] + 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.eigenvectors.get(0, 0).abs() - h).abs() < 1e-15);
        assert!((e.eigenvectors.get(0, 0) - e.eigenvectors.get(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction() {
        let a = gaussian_matrix(&mut Rng::new(11), 40, 25);
        let c = gram(&a).unwrap();
        let e = jacobi_eigh(&c).unwrap();
        let back = e.reconstruct_with(|l| l);
        assert!(fro_norm(&back.sub(&c).unwrap()) <= 1e-10 * fro_norm(&c));
        let vtv = gram(&e.eigenvectors).unwrap();
        assert!(fro_norm(&vtv.sub(&DenseMatrix::identity(25)).unwrap()) <= 1e-10);
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_asymmetric() {
        let c = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(jacobi_eigh(&c), Err(Error::NotSymmetric { .. })));
        assert!(matches!(jacobi_eigh(&DenseMatrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }
}
