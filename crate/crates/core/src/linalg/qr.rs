use super::matrix::fro_norm;
use super::DenseMatrix;
use crate::error::{invalid, Error, Result};

/// Relative pivot threshold below which the input is declared rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Thin Householder QR of a tall matrix: `a = q * r` with `q` (m x n) having
/// orthonormal columns and `r` (n x n) upper triangular with a positive
/// diagonal. The sign convention makes the factorization unique.
pub fn thin_qr(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(invalid(format!("thin_qr needs rows >= cols, got {m}x{n}")));
    }
    a.ensure_finite("thin_qr")?;
    let threshold = RANK_TOL * fro_norm(a);

    // Column-major working copy so reflectors touch contiguous memory.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
    let mut r = DenseMatrix::zeros(n, n);

    for k in 0..n {
        let x = &cols[k][k..];
        let norm = norm2(x);
        if norm <= threshold || norm == 0.0 {
            return Err(Error::RankDeficient { op: "thin_qr", pivot: norm, threshold });
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|t| t * t).sum();
        let beta = 2.0 / vv;
        for col in cols.iter_mut().skip(k) {
            reflect(&mut col[k..], &v, beta);
        }
        for j in k..n {
            r.set(k, j, cols[j][k]);
        }
        reflectors.push((v, beta));
    }

    // Accumulate Q by applying the reflectors to the leading identity columns.
    let mut qcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for (k, (v, beta)) in reflectors.iter().enumerate().rev() {
        for col in qcols.iter_mut() {
            reflect(&mut col[k..], v, *beta);
        }
    }

    for k in 0..n {
        if r.get(k, k) < 0.0 {
            for j in k..n {
                r.set(k, j, -r.get(k, j));
            }
            for v in qcols[k].iter_mut() {
                *v = -*v;
            }
        }
    }
    let mut q = DenseMatrix::zeros(m, n);
    for (j, col) in qcols.iter().enumerate() {
        q.set_column(j, col);
    }
    Ok((q, r))
}

fn reflect(x: &mut [f64], v: &[f64], beta: f64) {
    let w = dot(x, v) * beta;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= w * vi;
    }
}

/// Dot product with four independent accumulators, so the loop is not bound
/// by the latency of a single running sum.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale) * (v / scale)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, gram, matmul, Rng};

    #[test]
    fn hand_example() {
        let a = DenseMatrix::from_rows(&[[2.0], [0.0]]).unwrap();
        let (q, r) = thin_qr(&a).unwrap();
        assert_eq!(q, DenseMatrix::from_rows(&[[1.0], [0.0]]).unwrap());
        assert_eq!(r, DenseMatrix::from_rows(&[[2.0]]).unwrap());
    }

    #[test]
    fn orthonormal_input_is_fixed() {
        let (x, _) = thin_qr(&gaussian_matrix(&mut Rng::new(1), 12, 4)).unwrap();
        let (q, r) = thin_qr(&x).unwrap();
        assert!(fro_norm(&q.sub(&x).unwrap()) < 1e-13);
        assert!(fro_norm(&r.sub(&DenseMatrix::identity(4)).unwrap()) < 1e-13);
    }

    #[test]
    fn random_tall_matrix() {
        let a = gaussian_matrix(&mut Rng::new(5), 50, 5);
        let (q, r) = thin_qr(&a).unwrap();
        let defect = gram(&q).unwrap().sub(&DenseMatrix::identity(5)).unwrap();
        assert!(fro_norm(&defect) <= 1e-12);
        let back = matmul(&q, &r).unwrap();
        assert!(fro_norm(&back.sub(&a).unwrap()) <= 1e-12 * fro_norm(&a));
        for i in 0..5 {
            assert!(r.get(i, i) > 0.0);
            for j in 0..i {
                assert_eq!(r.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn rank_deficient_is_reported() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert!(matches!(thin_qr(&a), Err(Error::RankDeficient { .. })));
        assert!(thin_qr(&DenseMatrix::zeros(2, 3)).is_err());
    }
}
