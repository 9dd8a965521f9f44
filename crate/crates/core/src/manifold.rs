//! Stiefel manifold geometry.
//!
//! `St(d, r)` is the set of `d x r` matrices with orthonormal columns and the
//! safety region `St(d, r)^eps` is the tube `||x^T x - I||_F <= eps` around
//! it. Everything here is a pure function of its inputs.

use crate::error::{invalid, Error, Result};
use crate::linalg::{fro_norm, gaussian_matrix, gram, matmul, matmul_tn, polar_factor, spectral_map, sym, thin_qr, DenseMatrix, Rng};

/// Feasibility tolerance for inputs that must lie on the manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

/// Shape and safety radius of a Stiefel problem.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StiefelParams {
    pub d: usize,
    pub r: usize,
    pub epsilon: f64,
}

impl StiefelParams {
    pub fn new(d: usize, r: usize, epsilon: f64) -> Result<Self> {
        if r == 0 || d < r {
            return Err(invalid(format!("need d >= r >= 1, got d={d}, r={r}")));
        }
        if !(epsilon > 0.0 && epsilon < 0.75) {
            return Err(invalid(format!("epsilon must lie in (0, 3/4), got {epsilon}")));
        }
        Ok(Self { d, r, epsilon })
    }

    pub fn check_shape(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != (self.d, self.r) {
            return Err(Error::DimensionMismatch { op: "stiefel shape", left: x.shape(), right: (self.d, self.r) });
        }
        Ok(())
    }

    /// `||x^T x - I||_F` after checking that `x` is `d x r`.
    pub fn gap(&self, x: &DenseMatrix) -> Result<f64> {
        self.check_shape(x)?;
        feasibility_gap(x)
    }

    /// On-manifold gate, loosened linearly in `d` past 1000 rows.
    pub fn manifold_tol(&self) -> f64 {
        on_manifold_tol(self.d)
    }
}

pub(crate) fn on_manifold_tol(d: usize) -> f64 {
    ON_MANIFOLD_TOL * (d as f64 / 1000.0).max(1.0)
}

/// `x^T x - I` (exactly symmetric).
pub fn gram_defect(x: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(gram(x)?.add_diagonal(-1.0))
}

/// `||x^T x - I_r||_F`.
pub fn feasibility_gap(x: &DenseMatrix) -> Result<f64> {
    Ok(fro_norm(&gram_defect(x)?))
}

pub fn in_safety_region(x: &DenseMatrix, params: &StiefelParams) -> Result<bool> {
    Ok(params.gap(x)? <= params.epsilon)
}

pub(crate) fn require_on_manifold(x: &DenseMatrix) -> Result<()> {
    let gap = feasibility_gap(x)?;
    let tolerance = on_manifold_tol(x.rows());
    if gap > tolerance {
        return Err(Error::OffManifold { gap, tolerance });
    }
    Ok(())
}

fn same_shape(a: &DenseMatrix, b: &DenseMatrix, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch { op, left: a.shape(), right: b.shape() });
    }
    Ok(())
}

/// Relative gradient `skew(g x^T) x`, valid on and off the manifold.
///
/// Evaluated as `(g S - x (g^T x)) / 2` with `S = x^T x`, which costs
/// `O(d r^2)` instead of forming the `d x d` matrix `g x^T`.
pub fn riemannian_grad(euclid_grad: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape(euclid_grad, x, "riemannian_grad")?;
    let s = gram(x)?;
    riemannian_grad_with_gram(euclid_grad, x, &s)
}

pub(crate) fn riemannian_grad_with_gram(g: &DenseMatrix, x: &DenseMatrix, s: &DenseMatrix) -> Result<DenseMatrix> {
    let gtx = matmul_tn(g, x)?;
    let mut out = matmul(g, s)?;
    out.axpy(-1.0, &matmul(x, &gtx)?)?;
    Ok(out.scale(0.5))
}

/// Tangent projection `xi - x sym(x^T xi)` at an on-manifold point.
pub fn project_tangent(xi: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape(xi, x, "project_tangent")?;
    require_on_manifold(x)?;
    let s = sym(&matmul_tn(x, xi)?)?;
    xi.sub(&matmul(x, &s)?)
}

/// QR retraction: the Q factor of `x + step`.
pub fn retract_qr(x: &DenseMatrix, step: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape(step, x, "retract_qr")?;
    require_on_manifold(x)?;
    Ok(thin_qr(&x.add(step)?)?.0)
}

/// Projection retraction: the polar factor of `x + step`.
pub fn retract_polar(x: &DenseMatrix, step: &DenseMatrix) -> Result<DenseMatrix> {
    same_shape(step, x, "retract_polar")?;
    require_on_manifold(x)?;
    polar_factor(&x.add(step)?)
}

/// Q factor of a Gaussian `d x r` matrix (Haar distributed on `St(d, r)`).
pub fn random_stiefel(rng: &mut Rng, params: &StiefelParams) -> Result<DenseMatrix> {
    loop {
        let g = gaussian_matrix(rng, params.d, params.r);
        match thin_qr(&g) {
            Ok((q, _)) => return Ok(q),
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Random symmetric `r x r` matrix with Frobenius norm exactly `norm`.
pub fn random_symmetric(rng: &mut Rng, r: usize, norm: f64) -> Result<DenseMatrix> {
    let e = sym(&gaussian_matrix(rng, r, r))?;
    let n = fro_norm(&e);
    if n == 0.0 {
        return Ok(e);
    }
    Ok(e.scale(norm / n))
}

/// Moves an on-manifold `q` to `q (I + E)^{1/2}`, which has `x^T x = I + E`
/// and hence feasibility gap `||E||_F = gap`.
pub fn inflate_to_gap(rng: &mut Rng, q: &DenseMatrix, gap: f64) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&gap) {
        return Err(invalid(format!("inflation gap must lie in [0, 1), got {gap}")));
    }
    if gap == 0.0 {
        return Ok(q.clone());
    }
    let e = random_symmetric(rng, q.cols(), gap)?;
    let root = spectral_map(&e.add_diagonal(1.0), |l| l.max(0.0).sqrt())?;
    matmul(q, &root)
}

/// A point of the safety region with gap uniform in `[0, max_gap]`.
pub fn sample_safety_region(rng: &mut Rng, params: &StiefelParams, max_gap: f64) -> Result<DenseMatrix> {
    if max_gap > params.epsilon {
        return Err(invalid(format!("max_gap {max_gap} exceeds epsilon {}", params.epsilon)));
    }
    let q = random_stiefel(rng, params)?;
    let gap = rng.uniform() * max_gap;
    inflate_to_gap(rng, &q, gap)
}

/// Gaussian tangent vector at an on-manifold `x`.
pub fn random_tangent(rng: &mut Rng, x: &DenseMatrix) -> Result<DenseMatrix> {
    let g = gaussian_matrix(rng, x.rows(), x.cols());
    project_tangent(&g, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;

    fn col(v: &[f64]) -> DenseMatrix {
        DenseMatrix::column_vector(v)
    }

    #[test]
    fn gap_examples() {
        let p = StiefelParams::new(2, 1, 0.25).unwrap();
        assert_eq!(p.gap(&col(&[1.0, 0.0])).unwrap(), 0.0);
        let x = col(&[1.1, 0.0]);
        let g = p.gap(&x).unwrap();
        assert!((g - 0.21).abs() < 1e-15);
        assert!(in_safety_region(&x, &p).unwrap());
        let tight = StiefelParams::new(2, 1, 0.20).unwrap();
        assert!(!in_safety_region(&x, &tight).unwrap());
        let z = DenseMatrix::zeros(5, 3);
        assert!((feasibility_gap(&z).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!(p.gap(&DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(StiefelParams::new(2, 3, 0.5).is_err());
        assert!(StiefelParams::new(2, 0, 0.5).is_err());
        assert!(StiefelParams::new(2, 1, 0.75).is_err());
        assert!(StiefelParams::new(2, 1, 0.0).is_err());
    }

    #[test]
    fn relative_gradient_examples() {
        // f(x) = -x^T diag(2,1) x, grad = -2 diag(2,1) x
        let egrad = |x: &DenseMatrix| DenseMatrix::column_vector(&[-4.0 * x.get(0, 0), -2.0 * x.get(1, 0)]);
        let e1 = col(&[1.0, 0.0]);
        assert_eq!(riemannian_grad(&egrad(&e1), &e1).unwrap(), DenseMatrix::zeros(2, 1));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x = col(&[h, h]);
        let g = riemannian_grad(&egrad(&x), &x).unwrap();
        assert!((g.get(0, 0) + 0.5 * h).abs() < 1e-15);
        assert!((g.get(1, 0) - 0.5 * h).abs() < 1e-15);
        assert!((fro_norm(&g) - 0.5).abs() < 1e-15);
        assert_eq!(riemannian_grad(&DenseMatrix::zeros(2, 1), &x).unwrap(), DenseMatrix::zeros(2, 1));
    }

    #[test]
    fn relative_gradient_matches_skew_definition() {
        let mut rng = Rng::new(4);
        let x = gaussian_matrix(&mut rng, 7, 3);
        let g = gaussian_matrix(&mut rng, 7, 3);
        let gxt = matmul(&g, &x.transpose()).unwrap();
        let want = matmul(&crate::linalg::skew(&gxt).unwrap(), &x).unwrap();
        let got = riemannian_grad(&g, &x).unwrap();
        assert!(fro_norm(&got.sub(&want).unwrap()) < 1e-12 * fro_norm(&want));
    }

    #[test]
    fn tangent_projection_examples() {
        let e1 = col(&[1.0, 0.0]);
        assert_eq!(project_tangent(&e1, &e1).unwrap(), DenseMatrix::zeros(2, 1));
        assert_eq!(project_tangent(&col(&[1.0, 1.0]), &e1).unwrap(), col(&[0.0, 1.0]));
        assert_eq!(project_tangent(&col(&[0.0, 1.0]), &e1).unwrap(), col(&[0.0, 1.0]));
        assert!(matches!(project_tangent(&e1, &col(&[1.1, 0.0])), Err(Error::OffManifold { .. })));
        let mut rng = Rng::new(9);
        let p = StiefelParams::new(10, 3, 0.5).unwrap();
        let x = random_stiefel(&mut rng, &p).unwrap();
        let eta = random_tangent(&mut rng, &x).unwrap();
        let s = sym(&matmul_tn(&x, &eta).unwrap()).unwrap();
        assert!(fro_norm(&s) < 1e-12);
        let _ = inner(&eta, &eta).unwrap();
    }

    #[test]
    fn retraction_examples() {
        let e1 = col(&[1.0, 0.0]);
        let zero = DenseMatrix::zeros(2, 1);
        assert_eq!(retract_qr(&e1, &zero).unwrap(), e1);
        assert_eq!(retract_polar(&e1, &zero).unwrap(), e1);
        let t = 0.3;
        let step = col(&[0.0, t]);
        let n = (1.0 + t * t).sqrt();
        let want = col(&[1.0 / n, t / n]);
        for got in [retract_qr(&e1, &step).unwrap(), retract_polar(&e1, &step).unwrap()] {
            assert!(fro_norm(&got.sub(&want).unwrap()) < 1e-15);
        }
    }

    #[test]
    fn inflation_hits_requested_gap() {
        let mut rng = Rng::new(17);
        let p = StiefelParams::new(12, 4, 0.5).unwrap();
        let q = random_stiefel(&mut rng, &p).unwrap();
        for gap in [0.0, 0.1, 0.49] {
            let x = inflate_to_gap(&mut rng, &q, gap).unwrap();
            assert!((feasibility_gap(&x).unwrap() - gap).abs() < 1e-12);
        }
    }
}
