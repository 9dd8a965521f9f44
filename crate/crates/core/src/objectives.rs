//! Objective models.
//!
//! [`ObjectiveModel`] is the interface every solver consumes. [`PcaObjective`]
//! is the quadratic family `f(x) = -Tr(c x D x^T)` with a closed-form optimum,
//! and [`FnObjective`] wraps arbitrary closures.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::linalg::{fro_norm, jacobi_eigh, matmul, DenseMatrix, Rng, SymEigDecomposition};
use crate::manifold::{random_tangent, retract_qr, riemannian_grad};

pub trait ObjectiveModel: Send + Sync {
    /// `(d, r)` of the variable.
    fn shape(&self) -> (usize, usize);

    fn value(&self, x: &DenseMatrix) -> Result<f64>;

    fn euclid_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix>;

    fn value_and_grad(&self, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        Ok((self.value(x)?, self.euclid_grad(x)?))
    }

    /// Euclidean Hessian applied to `v`, when available in closed form.
    fn hess_vec(&self, _x: &DenseMatrix, _v: &DenseMatrix) -> Option<Result<DenseMatrix>> {
        None
    }

    fn descriptor(&self) -> String;

    /// Global Lipschitz constant of the Euclidean gradient, if known.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    /// Analytic bound on `||grad f(x)||_F` (Euclidean) over the safety region of radius `epsilon`.
    fn grad_norm_bound(&self, _epsilon: f64) -> Option<f64> {
        None
    }

    /// Floating-point operations for one call to `value_and_grad`.
    fn grad_flops(&self) -> u64 {
        0
    }
}

impl<T: ObjectiveModel + ?Sized> ObjectiveModel for &T {
    fn shape(&self) -> (usize, usize) {
        (**self).shape()
    }
    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        (**self).value(x)
    }
    fn euclid_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        (**self).euclid_grad(x)
    }
    fn value_and_grad(&self, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        (**self).value_and_grad(x)
    }
    fn hess_vec(&self, x: &DenseMatrix, v: &DenseMatrix) -> Option<Result<DenseMatrix>> {
        (**self).hess_vec(x, v)
    }
    fn descriptor(&self) -> String {
        (**self).descriptor()
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        (**self).lipschitz_bound()
    }
    fn grad_norm_bound(&self, epsilon: f64) -> Option<f64> {
        (**self).grad_norm_bound(epsilon)
    }
    fn grad_flops(&self) -> u64 {
        (**self).grad_flops()
    }
}

fn check_shape(expected: (usize, usize), x: &DenseMatrix, op: &'static str) -> Result<()> {
    if x.shape() != expected {
        return Err(Error::DimensionMismatch { op, left: x.shape(), right: expected });
    }
    Ok(())
}

/// Default PCA weights `diag(r, r-1, ..., 1) / r`.
pub fn default_weights(r: usize) -> Vec<f64> {
    (0..r).map(|i| (r - i) as f64 / r as f64).collect()
}

/// `f(x) = -Tr(c x D x^T)` with `c = A^T A` precomputed.
pub struct PcaObjective {
    c: DenseMatrix,
    weights: Vec<f64>,
    a_rows: usize,
    lambda_max_hint: Option<f64>,
    eig: OnceLock<SymEigDecomposition>,
}

impl fmt::Debug for PcaObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PcaObjective").field("d", &self.c.rows()).field("r", &self.weights.len()).field("a_rows", &self.a_rows).finish()
    }
}

impl PcaObjective {
    /// Validates that `c` is square and symmetric and that the weights are
    /// strictly decreasing and positive.
    pub fn new(c: DenseMatrix, weights: Vec<f64>, a_rows: usize) -> Result<Self> {
        let (d, cols) = c.shape();
        if d != cols {
            return Err(Error::NotSquare { op: "PcaObjective::new", rows: d, cols });
        }
        c.ensure_finite("PcaObjective::new")?;
        let tol = 1e-10 * fro_norm(&c);
        let asym = c.asymmetry().unwrap_or(0.0);
        if asym > tol {
            return Err(Error::NotSymmetric { asymmetry: asym, tolerance: tol });
        }
        let r = weights.len();
        if r == 0 || r > d {
            return Err(invalid(format!("need 1 <= r <= d, got r={r}, d={d}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) || weights.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("PCA weights must be positive and strictly decreasing"));
        }
        Ok(Self { c, weights, a_rows, lambda_max_hint: None, eig: OnceLock::new() })
    }

    /// Builds `c = A^T A` from a data matrix.
    pub fn from_data(a: &DenseMatrix, weights: Vec<f64>) -> Result<Self> {
        Self::new(crate::linalg::gram(a)?, weights, a.rows())
    }

    /// Supplies the largest eigenvalue of `c` when it is known by construction,
    /// so analytic bounds do not need an eigendecomposition.
    pub fn with_lambda_max(mut self, lambda_max: f64) -> Self {
        self.lambda_max_hint = Some(lambda_max);
        self
    }

    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn a_rows(&self) -> usize {
        self.a_rows
    }

    pub fn d(&self) -> usize {
        self.c.rows()
    }

    pub fn r(&self) -> usize {
        self.weights.len()
    }

    /// Cached eigendecomposition of `c`.
    pub fn eigen(&self) -> Result<&SymEigDecomposition> {
        if let Some(e) = self.eig.get() {
            return Ok(e);
        }
        let e = jacobi_eigh(&self.c)?;
        let _ = self.eig.set(e);
        Ok(self.eig.get().expect("just set"))
    }

    pub fn lambda_max(&self) -> Result<f64> {
        match self.lambda_max_hint {
            Some(l) => Ok(l),
            None => Ok(self.eigen()?.eigenvalues[0]),
        }
    }

    fn max_weight(&self) -> f64 {
        self.weights[0]
    }

    /// A copy with `c` multiplied by `t > 0`, so `f` scales by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        let mut out = Self::new(self.c.scale(t), self.weights.clone(), self.a_rows)?;
        out.lambda_max_hint = self.lambda_max_hint.map(|l| l * t);
        Ok(out)
    }
}

impl ObjectiveModel for PcaObjective {
    fn shape(&self) -> (usize, usize) {
        (self.d(), self.r())
    }

    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        Ok(self.value_and_grad(x)?.0)
    }

    fn euclid_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(self.shape(), x, "pca_grad")?;
        let cx = matmul(&self.c, x)?;
        let w: Vec<f64> = self.weights.iter().map(|w| -2.0 * w).collect();
        cx.scale_columns(&w)
    }

    fn value_and_grad(&self, x: &DenseMatrix) -> Result<(f64, DenseMatrix)> {
        check_shape(self.shape(), x, "pca_eval")?;
        let cx = matmul(&self.c, x)?;
        let r = self.r();
        let mut value = 0.0;
        for (xrow, crow) in x.as_slice().chunks_exact(r).zip(cx.as_slice().chunks_exact(r)) {
            for j in 0..r {
                value -= self.weights[j] * xrow[j] * crow[j];
            }
        }
        let w: Vec<f64> = self.weights.iter().map(|w| -2.0 * w).collect();
        Ok((value, cx.scale_columns(&w)?))
    }

    fn hess_vec(&self, _x: &DenseMatrix, v: &DenseMatrix) -> Option<Result<DenseMatrix>> {
        Some(self.euclid_grad(v))
    }

    fn descriptor(&self) -> String {
        format!("pca(d={}, r={}, m={})", self.d(), self.r(), self.a_rows)
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        self.lambda_max().ok().map(|l| 2.0 * l * self.max_weight())
    }

    fn grad_norm_bound(&self, epsilon: f64) -> Option<f64> {
        let l = self.lipschitz_bound()?;
        Some(l * (self.r() as f64 * (1.0 + epsilon)).sqrt())
    }

    fn grad_flops(&self) -> u64 {
        let (d, r) = (self.d() as u64, self.r() as u64);
        2 * d * d * r + 3 * d * r
    }
}

type ValueFn = dyn Fn(&DenseMatrix) -> Result<f64> + Send + Sync;
type GradFn = dyn Fn(&DenseMatrix) -> Result<DenseMatrix> + Send + Sync;

/// Objective assembled from closures. No Hessian, no analytic bounds.
pub struct FnObjective {
    shape: (usize, usize),
    name: String,
    value: Box<ValueFn>,
    grad: Box<GradFn>,
    flops: u64,
}

impl FnObjective {
    pub fn new(
        shape: (usize, usize),
        name: impl Into<String>,
        value: impl Fn(&DenseMatrix) -> Result<f64> + Send + Sync + 'static,
        grad: impl Fn(&DenseMatrix) -> Result<DenseMatrix> + Send + Sync + 'static,
    ) -> Self {
        Self { shape, name: name.into(), value: Box::new(value), grad: Box::new(grad), flops: 0 }
    }

    /// Declares the cost of one gradient evaluation for flop accounting.
    pub fn with_flops(mut self, flops: u64) -> Self {
        self.flops = flops;
        self
    }
}

impl ObjectiveModel for FnObjective {
    fn shape(&self) -> (usize, usize) {
        self.shape
    }
    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        check_shape(self.shape, x, "FnObjective::value")?;
        (self.value)(x)
    }
    fn euclid_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(self.shape, x, "FnObjective::grad")?;
        (self.grad)(x)
    }
    fn descriptor(&self) -> String {
        self.name.clone()
    }
    fn grad_flops(&self) -> u64 {
        self.flops
    }
}

/// `f = 0`; the minimizer set is the whole manifold.
#[derive(Clone, Copy, Debug)]
pub struct ZeroObjective {
    pub d: usize,
    pub r: usize,
}

impl ObjectiveModel for ZeroObjective {
    fn shape(&self) -> (usize, usize) {
        (self.d, self.r)
    }
    fn value(&self, x: &DenseMatrix) -> Result<f64> {
        check_shape(self.shape(), x, "zero")?;
        Ok(0.0)
    }
    fn euclid_grad(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        check_shape(self.shape(), x, "zero")?;
        Ok(DenseMatrix::zeros(self.d, self.r))
    }
    fn hess_vec(&self, _x: &DenseMatrix, v: &DenseMatrix) -> Option<Result<DenseMatrix>> {
        Some(Ok(DenseMatrix::zeros(v.rows(), v.cols())))
    }
    fn descriptor(&self) -> String {
        format!("zero(d={}, r={})", self.d, self.r)
    }
    fn lipschitz_bound(&self) -> Option<f64> {
        Some(0.0)
    }
    fn grad_norm_bound(&self, _epsilon: f64) -> Option<f64> {
        Some(0.0)
    }
}

/// Minimizer set of a PCA instance: `v_top` up to column signs.
#[derive(Clone, Debug)]
pub struct SolutionOracle {
    pub f_star: f64,
    /// Top-r eigenvectors of `c`, the largest paired with the largest weight.
    pub v_top: DenseMatrix,
    /// The `r + 1` leading eigenvalues (or all of them when `r == d`).
    pub leading_eigenvalues: Vec<f64>,
    /// The solution set is `{v_top diag(s) : s in {-1, 1}^r}`.
    pub sign_freedom: bool,
}

impl SolutionOracle {
    /// Smallest gap among the leading eigenvalues.
    pub fn eigengap(&self) -> f64 {
        self.leading_eigenvalues.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
    }
}

/// Brute-force oracle through the Jacobi eigendecomposition of `c`.
///
/// Fails when two of the leading `r + 1` eigenvalues are closer than
/// `1e-8 * max(1, lambda_max)`, because the solution set is then a continuum.
pub fn optimum_oracle(obj: &PcaObjective) -> Result<SolutionOracle> {
    let eig = obj.eigen()?;
    let (d, r) = obj.shape();
    let vals = &eig.eigenvalues;
    let norm = fro_norm(obj.c());
    if vals[d - 1] < -1e-10 * norm {
        return Err(invalid(format!("c is not positive semidefinite (eigenvalue {:e})", vals[d - 1])));
    }
    let lead = &vals[..(r + 1).min(d)];
    let tol = 1e-8 * vals[0].abs().max(1.0);
    for (i, w) in lead.windows(2).enumerate() {
        if w[0] - w[1] <= tol {
            return Err(Error::DegenerateEigengap { index: i + 1, gap: w[0] - w[1] });
        }
    }
    let mut v_top = DenseMatrix::zeros(d, r);
    for j in 0..r {
        v_top.set_column(j, &eig.eigenvectors.column(j));
    }
    let f_star = -vals.iter().zip(obj.weights()).map(|(s, w)| s * w).sum::<f64>();
    Ok(SolutionOracle { f_star, v_top, leading_eigenvalues: lead.to_vec(), sign_freedom: true })
}

/// `dist(S, x)`, minimizing over column signs independently.
pub fn dist_to_solution(oracle: &SolutionOracle, x: &DenseMatrix) -> Result<f64> {
    let v = &oracle.v_top;
    if x.shape() != v.shape() {
        return Err(Error::DimensionMismatch { op: "dist_to_solution", left: x.shape(), right: v.shape() });
    }
    let (d, r) = v.shape();
    let mut total = 0.0;
    for j in 0..r {
        let (mut minus, mut plus) = (0.0, 0.0);
        for i in 0..d {
            let (a, b) = (x.get(i, j), v.get(i, j));
            minus += (a - b) * (a - b);
            plus += (a + b) * (a + b);
        }
        total += minus.min(plus);
    }
    Ok(total.sqrt())
}

/// Random member of the solution set (random column signs).
pub fn random_solution(oracle: &SolutionOracle, rng: &mut Rng) -> DenseMatrix {
    let r = oracle.v_top.cols();
    let signs: Vec<f64> = (0..r).map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 }).collect();
    oracle.v_top.scale_columns(&signs).expect("matching width")
}

/// Samples on-manifold points within `2 * delta` of the solution set and
/// returns the smallest observed `||grad f||^2 / (2 |f - f*|)`.
///
/// Points with `|f - f*| < 1e-14` are skipped. Every sample consumes the same
/// amount of randomness, so growing `samples` with a fixed seed only adds
/// points and the estimate can only decrease.
pub fn estimate_pl_constant(obj: &dyn ObjectiveModel, oracle: &SolutionOracle, delta: f64, samples: usize, rng: &mut Rng) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let base = random_solution(oracle, rng);
        let dir = random_tangent(rng, &base)?;
        // QR retraction shrinks distances, so overshoot and reject
        let radius = 3.0 * delta * rng.uniform();
        let n = fro_norm(&dir);
        if n == 0.0 {
            continue;
        }
        let x = retract_qr(&base, &dir.scale(radius / n))?;
        if dist_to_solution(oracle, &x)? > 2.0 * delta {
            continue;
        }
        let (f, g) = obj.value_and_grad(&x)?;
        let excess = (f - oracle.f_star).abs();
        if excess < 1e-14 {
            continue;
        }
        let rg = fro_norm(&riemannian_grad(&g, &x)?);
        best = best.min(rg * rg / (2.0 * excess));
    }
    if best.is_infinite() {
        return Err(Error::AllSamplesSkipped { samples });
    }
    Ok(best)
}

/// Central differences of a scalar function of a matrix, entry by entry.
pub fn finite_diff(f: impl Fn(&DenseMatrix) -> Result<f64>, x: &DenseMatrix, h: f64) -> Result<DenseMatrix> {
    if !(h > 0.0) {
        return Err(invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let (rows, cols) = x.shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut probe = x.clone();
    for i in 0..rows {
        for j in 0..cols {
            let orig = x.get(i, j);
            probe.set(i, j, orig + h);
            let up = f(&probe)?;
            probe.set(i, j, orig - h);
            let down = f(&probe)?;
            probe.set(i, j, orig);
            out.set(i, j, (up - down) / (2.0 * h));
        }
    }
    Ok(out)
}

/// Central-difference gradient of an objective.
pub fn finite_diff_grad(obj: &dyn ObjectiveModel, x: &DenseMatrix, h: f64) -> Result<DenseMatrix> {
    finite_diff(|y| obj.value(y), x, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, gram};
    use crate::manifold::{random_stiefel, StiefelParams};

    fn diag_objective(c: &[f64], w: &[f64]) -> PcaObjective {
        PcaObjective::new(DenseMatrix::from_diag(c), w.to_vec(), 0).unwrap()
    }

    fn random_pca(seed: u64, d: usize, r: usize) -> PcaObjective {
        let a = gaussian_matrix(&mut Rng::new(seed), 2 * d, d);
        PcaObjective::from_data(&a, default_weights(r)).unwrap()
    }

    #[test]
    fn hand_values() {
        let obj = diag_objective(&[2.0, 1.0], &[1.0]);
        let e1 = DenseMatrix::column_vector(&[1.0, 0.0]);
        assert_eq!(obj.value(&e1).unwrap(), -2.0);
        assert_eq!(obj.euclid_grad(&e1).unwrap(), DenseMatrix::column_vector(&[-4.0, 0.0]));
        let z = DenseMatrix::zeros(2, 1);
        assert_eq!(obj.value(&z).unwrap(), 0.0);
        assert_eq!(obj.euclid_grad(&z).unwrap(), z);
        assert!(obj.value(&DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn sign_flip_and_linearity() {
        let obj = random_pca(1, 6, 3);
        let mut rng = Rng::new(2);
        let x = gaussian_matrix(&mut rng, 6, 3);
        let y = gaussian_matrix(&mut rng, 6, 3);
        let flipped = x.scale_columns(&[-1.0, 1.0, -1.0]).unwrap();
        let (f1, f2) = (obj.value(&x).unwrap(), obj.value(&flipped).unwrap());
        assert!((f1 - f2).abs() <= 1e-12 * f1.abs());
        let lhs = obj.euclid_grad(&x.add(&y).unwrap()).unwrap();
        let rhs = obj.euclid_grad(&x).unwrap().add(&obj.euclid_grad(&y).unwrap()).unwrap();
        assert!(fro_norm(&lhs.sub(&rhs).unwrap()) <= 1e-12 * fro_norm(&lhs));
    }

    #[test]
    fn weights_validation() {
        let c = DenseMatrix::identity(3);
        assert!(PcaObjective::new(c.clone(), vec![1.0, 1.0], 0).is_err());
        assert!(PcaObjective::new(c.clone(), vec![1.0, -0.5], 0).is_err());
        assert!(PcaObjective::new(c.clone(), vec![1.0; 0], 0).is_err());
        assert!(PcaObjective::new(c, vec![1.0, 0.5], 0).is_ok());
        assert_eq!(default_weights(4), vec![1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn oracle_hand_case() {
        let obj = diag_objective(&[3.0, 2.0, 1.0], &[2.0, 1.0]);
        let oracle = optimum_oracle(&obj).unwrap();
        assert_eq!(oracle.f_star, -8.0);
        assert_eq!(obj.value(&oracle.v_top).unwrap(), -8.0);
        let degenerate = diag_objective(&[1.0, 1.0, 1.0], &[1.0]);
        assert!(matches!(optimum_oracle(&degenerate), Err(Error::DegenerateEigengap { .. })));
    }

    #[test]
    fn oracle_on_random_instances() {
        for seed in 0..5 {
            let obj = random_pca(seed, 12, 4);
            let oracle = optimum_oracle(&obj).unwrap();
            let f = obj.value(&oracle.v_top).unwrap();
            assert!((f - oracle.f_star).abs() <= 1e-9 * oracle.f_star.abs());
            for j in 0..4 {
                let mut signs = vec![1.0; 4];
                signs[j] = -1.0;
                let flipped = oracle.v_top.scale_columns(&signs).unwrap();
                assert!((obj.value(&flipped).unwrap() - oracle.f_star).abs() <= 1e-9 * oracle.f_star.abs());
                assert!(dist_to_solution(&oracle, &flipped).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_hand_case() {
        let obj = diag_objective(&[2.0, 1.0], &[1.0]);
        let oracle = optimum_oracle(&obj).unwrap();
        let e2 = DenseMatrix::column_vector(&[0.0, 1.0]);
        assert!((dist_to_solution(&oracle, &e2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(dist_to_solution(&oracle, &oracle.v_top).unwrap(), 0.0);
    }

    #[test]
    fn pl_estimate_against_angle_grid() {
        // x = (cos t, sin t): f - f* = sin^2 t and ||grad f||^2 = sin^2(2t) / 4, ratio cos^2(t) / 2.
        let obj = diag_objective(&[2.0, 1.0], &[1.0]);
        let oracle = optimum_oracle(&obj).unwrap();
        let delta: f64 = 0.25;
        // dist = 2 sin(t/2) <= 2 delta on the grid
        let tmax = 2.0 * delta.asin();
        let grid_min = (1..=10_000).map(|k| tmax * k as f64 / 10_000.0).map(|t| 0.5 * t.cos() * t.cos()).fold(f64::INFINITY, f64::min);
        let mu = estimate_pl_constant(&obj, &oracle, delta, 4000, &mut Rng::new(5)).unwrap();
        assert!(mu > 0.0 && mu <= 2.0 * (2.0 - 1.0));
        assert!(mu >= grid_min * (1.0 - 1e-9), "{mu} vs {grid_min}");
        assert!(mu <= grid_min * 1.01, "{mu} vs {grid_min}");
    }

    #[test]
    fn pl_estimate_monotone_and_homogeneous() {
        let obj = random_pca(8, 8, 2);
        let oracle = optimum_oracle(&obj).unwrap();
        let mut prev = f64::INFINITY;
        for n in [10, 50, 200] {
            let mu = estimate_pl_constant(&obj, &oracle, 0.3, n, &mut Rng::new(3)).unwrap();
            assert!(mu <= prev);
            prev = mu;
        }
        let scaled = obj.scaled(3.0).unwrap();
        let scaled_oracle = optimum_oracle(&scaled).unwrap();
        let a = estimate_pl_constant(&obj, &oracle, 0.3, 100, &mut Rng::new(4)).unwrap();
        let b = estimate_pl_constant(&scaled, &scaled_oracle, 0.3, 100, &mut Rng::new(4)).unwrap();
        assert!((b - 3.0 * a).abs() <= 1e-6 * b, "{a} {b}");
    }

    #[test]
    fn finite_differences() {
        let obj = random_pca(3, 7, 3);
        let x = gaussian_matrix(&mut Rng::new(6), 7, 3);
        let fd = finite_diff_grad(&obj, &x, 1e-5).unwrap();
        let g = obj.euclid_grad(&x).unwrap();
        assert!(fro_norm(&fd.sub(&g).unwrap()) <= 1e-8 * fro_norm(&g));
        let zero = ZeroObjective { d: 7, r: 3 };
        assert_eq!(finite_diff_grad(&zero, &x, 1e-5).unwrap(), DenseMatrix::zeros(7, 3));
        assert!(finite_diff_grad(&obj, &x, 0.0).is_err());
    }

    #[test]
    fn smoothness_bound_holds() {
        let obj = random_pca(4, 9, 3);
        let l = obj.lipschitz_bound().unwrap();
        let mut rng = Rng::new(10);
        let p = StiefelParams::new(9, 3, 0.5).unwrap();
        for _ in 0..200 {
            let x = random_stiefel(&mut rng, &p).unwrap();
            let y = gaussian_matrix(&mut rng, 9, 3);
            let gd = obj.euclid_grad(&x).unwrap().sub(&obj.euclid_grad(&y).unwrap()).unwrap();
            assert!(fro_norm(&gd) <= l * fro_norm(&x.sub(&y).unwrap()) * (1.0 + 1e-12));
        }
        let _ = gram(&DenseMatrix::identity(2));
    }
}
