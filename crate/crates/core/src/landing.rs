//! The landing algorithm: a retraction-free solver for `min f(x)` over
//! `St(d, r)`.
//!
//! Each step moves along the landing field
//! `Lambda(x) = grad f(x) + lambda * x (x^T x - I)`, whose two parts are
//! orthogonal. The first drives optimality and the second pulls the iterate
//! back onto the manifold, so no retraction is ever computed.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{fro_norm, gram, matmul, DenseMatrix, Rng};
use crate::manifold::{riemannian_grad, riemannian_grad_with_gram, sample_safety_region, StiefelParams};
use crate::objectives::ObjectiveModel;
use crate::report::{ConfigSnapshot, ExitReason, FinalMetrics, FlopCount, IterateState, Provenance, RunReport, SafeStepInfo, TraceSink};

/// Relative slack allowed when comparing `alpha` with the safe step.
const SAFE_STEP_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop once `||Lambda(x)||_F <= grad_tol`.
    pub grad_tol: f64,
    /// Refuse to start when `alpha` exceeds the safe step.
    pub enforce_safe_step: bool,
    /// Seed for the sampled gradient bound, when one is needed.
    pub seed: u64,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self { alpha: 0.1, lambda: 1.0, epsilon: 0.5, max_iter: 10_000, grad_tol: 1e-6, enforce_safe_step: false, seed: 0 }
    }
}

impl LandingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.75) {
            return Err(invalid(format!("epsilon must lie in (0, 3/4), got {}", self.epsilon)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(invalid(format!("grad_tol must be nonnegative, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// `p(x) = ||x^T x - I||_F^2 / 4`.
pub fn penalty(x: &DenseMatrix) -> Result<f64> {
    let g = crate::manifold::feasibility_gap(x)?;
    Ok(0.25 * g * g)
}

/// `grad p(x) = x (x^T x - I)`.
pub fn penalty_grad(x: &DenseMatrix) -> Result<DenseMatrix> {
    matmul(x, &gram(x)?.add_diagonal(-1.0))
}

/// `Lambda(x) = grad f(x) + lambda * grad p(x)`.
pub fn landing_field(obj: &dyn ObjectiveModel, x: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    Ok(field_parts(obj, x, lambda)?.field)
}

/// Everything one landing step computes at `x`.
pub(crate) struct FieldParts {
    pub f_val: f64,
    pub euclid_grad: DenseMatrix,
    pub rel_grad: DenseMatrix,
    pub field: DenseMatrix,
    pub gap: f64,
}

pub(crate) fn field_parts(obj: &dyn ObjectiveModel, x: &DenseMatrix, lambda: f64) -> Result<FieldParts> {
    if x.shape() != obj.shape() {
        return Err(Error::DimensionMismatch { op: "landing_field", left: x.shape(), right: obj.shape() });
    }
    let s = gram(x)?;
    let n = s.add_diagonal(-1.0);
    let (f_val, euclid_grad) = obj.value_and_grad(x)?;
    let rel_grad = riemannian_grad_with_gram(&euclid_grad, x, &s)?;
    let mut field = matmul(x, &n)?.scale(lambda);
    field.axpy(1.0, &rel_grad)?;
    Ok(FieldParts { f_val, euclid_grad, rel_grad, field, gap: fro_norm(&n) })
}

/// Floating-point operations of one landing iteration, counted from the
/// products in [`field_parts`] plus the update.
pub fn landing_flops_per_iter(obj: &dyn ObjectiveModel) -> u64 {
    let (d, r) = obj.shape();
    let (d, r) = (d as u64, r as u64);
    // x^T x, g^T x, g S, x (g^T x), x N: five d x r x r products
    obj.grad_flops() + 5 * 2 * d * r * r + 12 * d * r + r * r
}

/// Largest step that keeps every iterate inside the safety region:
/// `min{ l e (1-e) / (G^2 + l^2 (1+e) e^2), sqrt(e / (2 G^2)), 1 / (2 l) }`.
/// A zero `g_bound` makes the middle term infinite.
pub fn safe_step(g_bound: f64, lambda: f64, epsilon: f64) -> Result<f64> {
    if !(g_bound >= 0.0) {
        return Err(invalid(format!("gradient bound must be nonnegative, got {g_bound}")));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.75) {
        return Err(invalid(format!("epsilon must lie in (0, 3/4), got {epsilon}")));
    }
    let g2 = g_bound * g_bound;
    let first = lambda * epsilon * (1.0 - epsilon) / (g2 + lambda * lambda * (1.0 + epsilon) * epsilon * epsilon);
    let second = if g_bound == 0.0 { f64::INFINITY } else { (epsilon / (2.0 * g2)).sqrt() };
    let third = 1.0 / (2.0 * lambda);
    Ok(first.min(second).min(third))
}

/// Bound `G` on `||grad f||_F` over the safety region, with its provenance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradBound {
    pub value: f64,
    pub provenance: Provenance,
}

/// Analytic `G = sup||grad f|| * sqrt(1 + eps)` when the objective provides a
/// Euclidean gradient bound, otherwise 1.5 times the largest relative gradient
/// norm seen at `samples` points of the safety region.
pub fn estimate_grad_bound(obj: &dyn ObjectiveModel, params: &StiefelParams, samples: usize, rng: &mut Rng) -> Result<GradBound> {
    if obj.shape() != (params.d, params.r) {
        return Err(Error::DimensionMismatch { op: "estimate_grad_bound", left: obj.shape(), right: (params.d, params.r) });
    }
    if let Some(b) = obj.grad_norm_bound(params.epsilon) {
        return Ok(GradBound { value: b * (1.0 + params.epsilon).sqrt(), provenance: Provenance::Analytic });
    }
    if samples == 0 {
        return Err(invalid("estimate_grad_bound needs at least one sample"));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = sample_safety_region(rng, params, params.epsilon)?;
        let g = obj.euclid_grad(&x)?;
        worst = worst.max(fro_norm(&riemannian_grad(&g, &x)?));
    }
    Ok(GradBound { value: 1.5 * worst, provenance: Provenance::Sampled })
}

/// Samples used for the gradient bound when the objective has no analytic one.
pub const GRAD_BOUND_SAMPLES: usize = 256;

/// Safe-step data for a configuration.
pub fn safe_step_info(obj: &dyn ObjectiveModel, cfg: &LandingConfig) -> Result<SafeStepInfo> {
    let (d, r) = obj.shape();
    let params = StiefelParams::new(d, r, cfg.epsilon)?;
    let g = estimate_grad_bound(obj, &params, GRAD_BOUND_SAMPLES, &mut Rng::with_stream(cfg.seed, 0x6b))?;
    Ok(SafeStepInfo { g_bound: g.value, g_provenance: g.provenance, alpha_safe: safe_step(g.value, cfg.lambda, cfg.epsilon)? })
}

/// Runs `x_{k+1} = x_k - alpha * Lambda(x_k)` from `x0`.
///
/// Preconditions (invalid configuration, `x0` outside the safety region, or
/// an unsafe step when `enforce_safe_step` is set) are returned as errors. An
/// iterate that leaves the safety region or becomes non-finite ends the run
/// with the corresponding [`ExitReason`]; the report keeps the last valid
/// metrics.
pub fn run_landing(obj: &dyn ObjectiveModel, x0: &DenseMatrix, cfg: &LandingConfig, sink: &mut dyn TraceSink) -> Result<RunReport> {
    cfg.validate()?;
    let (d, r) = obj.shape();
    let params = StiefelParams::new(d, r, cfg.epsilon)?;
    let gap0 = params.gap(x0)?;
    if gap0 > cfg.epsilon {
        return Err(Error::OutsideRegion { region: "safety region", value: gap0, limit: cfg.epsilon });
    }
    let mut report = RunReport::new("landing", obj.descriptor(), ConfigSnapshot::Landing(cfg.clone()));
    report.seed = Some(cfg.seed);
    if cfg.enforce_safe_step || obj.grad_norm_bound(cfg.epsilon).is_some() {
        let info = safe_step_info(obj, cfg)?;
        if cfg.enforce_safe_step && cfg.alpha > info.alpha_safe * (1.0 + SAFE_STEP_SLACK) {
            return Err(Error::UnsafeStep { alpha: cfg.alpha, alpha_safe: info.alpha_safe });
        }
        report.safe_step = Some(info);
    }
    let per_iter = landing_flops_per_iter(obj);

    let mut x = x0.clone();
    let mut wall_ns: u64 = 0;
    let mut k = 0usize;
    loop {
        let t0 = Instant::now();
        let parts = match field_parts(obj, &x, cfg.lambda) {
            Ok(p) => p,
            Err(Error::NonFinite { .. }) => {
                report.exit_reason = ExitReason::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        let field_norm = fro_norm(&parts.field);
        let grad_norm = fro_norm(&parts.rel_grad);
        wall_ns += t0.elapsed().as_nanos() as u64;

        if !(parts.f_val.is_finite() && field_norm.is_finite() && parts.gap.is_finite()) {
            report.exit_reason = ExitReason::NonFinite;
            break;
        }
        sink.record(&IterateState {
            iter: k,
            x: &x,
            f_val: parts.f_val,
            euclid_grad: &parts.euclid_grad,
            grad_norm,
            gap: parts.gap,
            direction: Some(&parts.field),
            wall_ns,
        })?;
        report.iterations = k;
        report.final_metrics =
            FinalMetrics { f_val: parts.f_val, grad_norm, stop_norm: field_norm, gap: parts.gap, dist_s: None, merit: None };
        if parts.gap > cfg.epsilon {
            report.exit_reason = ExitReason::SafetyViolation;
            break;
        }
        if field_norm <= cfg.grad_tol {
            report.exit_reason = ExitReason::Converged;
            break;
        }
        if k >= cfg.max_iter {
            report.exit_reason = ExitReason::MaxIter;
            break;
        }
        let t1 = Instant::now();
        x.axpy(-cfg.alpha, &parts.field)?;
        wall_ns += t1.elapsed().as_nanos() as u64;
        k += 1;
    }
    report.wall_ns = wall_ns;
    report.flops = FlopCount { per_iter, total: per_iter * (report.iterations as u64 + 1) };
    Ok(report)
}

/// Like [`run_landing`] but also returns the final iterate.
pub fn run_landing_with_point(
    obj: &dyn ObjectiveModel,
    x0: &DenseMatrix,
    cfg: &LandingConfig,
    sink: &mut dyn TraceSink,
) -> Result<(RunReport, DenseMatrix)> {
    let mut last = LastPoint { sink, x: None };
    let report = run_landing(obj, x0, cfg, &mut last)?;
    let x = last.x.unwrap_or_else(|| x0.clone());
    Ok((report, x))
}

struct LastPoint<'a> {
    sink: &'a mut dyn TraceSink,
    x: Option<DenseMatrix>,
}

impl TraceSink for LastPoint<'_> {
    fn record(&mut self, state: &IterateState<'_>) -> Result<()> {
        match &mut self.x {
            Some(x) => x.as_mut_slice().copy_from_slice(state.x.as_slice()),
            None => self.x = Some(state.x.clone()),
        }
        self.sink.record(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;
    use crate::objectives::{finite_diff, optimum_oracle, PcaObjective, ZeroObjective};
    use crate::report::{NullSink, TraceRecorder};

    fn toy() -> PcaObjective {
        PcaObjective::new(DenseMatrix::from_diag(&[2.0, 1.0]), vec![1.0], 0).unwrap()
    }

    #[test]
    fn penalty_examples() {
        let e1 = DenseMatrix::column_vector(&[1.0, 0.0]);
        assert_eq!(penalty(&e1).unwrap(), 0.0);
        assert_eq!(penalty_grad(&e1).unwrap(), DenseMatrix::zeros(2, 1));
        let x = DenseMatrix::column_vector(&[2.0, 0.0]);
        assert_eq!(penalty(&x).unwrap(), 2.25);
        assert_eq!(penalty_grad(&x).unwrap(), DenseMatrix::column_vector(&[6.0, 0.0]));
        assert!((penalty(&DenseMatrix::zeros(4, 3)).unwrap() - 0.75).abs() < 1e-15);
        let y = crate::linalg::gaussian_matrix(&mut Rng::new(1), 6, 3);
        let fd = finite_diff(penalty, &y, 1e-5).unwrap();
        let g = penalty_grad(&y).unwrap();
        assert!(fro_norm(&fd.sub(&g).unwrap()) <= 1e-8 * fro_norm(&g));
    }

    #[test]
    fn field_examples() {
        let obj = toy();
        let x = DenseMatrix::column_vector(&[1.1, 0.0]);
        let f = landing_field(&obj, &x, 1.0).unwrap();
        assert!((f.get(0, 0) - 0.231).abs() < 1e-15);
        assert_eq!(f.get(1, 0), 0.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let on = DenseMatrix::column_vector(&[h, h]);
        let rg = riemannian_grad(&obj.euclid_grad(&on).unwrap(), &on).unwrap();
        let lf = landing_field(&obj, &on, 3.0).unwrap();
        assert!(fro_norm(&lf.sub(&rg).unwrap()) < 1e-15);
        let e1 = DenseMatrix::column_vector(&[1.0, 0.0]);
        assert_eq!(landing_field(&obj, &e1, 1.0).unwrap(), DenseMatrix::zeros(2, 1));
    }

    #[test]
    fn field_parts_are_orthogonal() {
        let mut rng = Rng::new(12);
        let a = crate::linalg::gaussian_matrix(&mut rng, 20, 10);
        let obj = PcaObjective::from_data(&a, crate::objectives::default_weights(3)).unwrap();
        for _ in 0..20 {
            let x = crate::linalg::gaussian_matrix(&mut rng, 10, 3).scale(0.5);
            let g = riemannian_grad(&obj.euclid_grad(&x).unwrap(), &x).unwrap();
            let p = penalty_grad(&x).unwrap();
            assert!(inner(&g, &p).unwrap().abs() <= 1e-10 * fro_norm(&g) * fro_norm(&p));
        }
    }

    #[test]
    fn safe_step_examples() {
        assert!((safe_step(1.0, 1.0, 0.5).unwrap() - 2.0 / 11.0).abs() < 1e-15);
        assert_eq!(safe_step(0.0, 1.0, 0.5).unwrap(), 0.5f64.min(0.25 / 0.375));
        let mut prev = f64::INFINITY;
        for g in [1.0, 10.0, 1e3, 1e6] {
            let a = safe_step(g, 2.0, 0.3).unwrap();
            assert!(a <= prev && a <= 0.25);
            prev = a;
        }
        assert!(prev < 1e-11);
        assert!(safe_step(1.0, 1.0, 0.75).is_err());
    }

    #[test]
    fn grad_bound_examples() {
        let obj = toy();
        let p = StiefelParams::new(2, 1, 0.5).unwrap();
        let g = estimate_grad_bound(&obj, &p, 1, &mut Rng::new(0)).unwrap();
        assert!((g.value - 6.0).abs() < 1e-14);
        assert_eq!(g.provenance, Provenance::Analytic);
        let z = ZeroObjective { d: 4, r: 2 };
        let gz = estimate_grad_bound(&z, &StiefelParams::new(4, 2, 0.5).unwrap(), 10, &mut Rng::new(0)).unwrap();
        assert_eq!(gz.value, 0.0);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let obj = toy();
        let e1 = DenseMatrix::column_vector(&[1.0, 0.0]);
        let cfg = LandingConfig { alpha: 0.05, ..Default::default() };
        let report = run_landing(&obj, &e1, &cfg, &mut NullSink).unwrap();
        assert_eq!(report.exit_reason, ExitReason::Converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.final_metrics.stop_norm, 0.0);
    }

    #[test]
    fn rejects_bad_start_and_unsafe_step() {
        let obj = toy();
        let far = DenseMatrix::column_vector(&[2.0, 0.0]);
        let cfg = LandingConfig { alpha: 0.01, ..Default::default() };
        assert!(matches!(run_landing(&obj, &far, &cfg, &mut NullSink), Err(Error::OutsideRegion { .. })));
        let e2 = DenseMatrix::column_vector(&[0.0, 1.0]);
        let cfg = LandingConfig { alpha: 1.0, enforce_safe_step: true, ..Default::default() };
        assert!(matches!(run_landing(&obj, &e2, &cfg, &mut NullSink), Err(Error::UnsafeStep { .. })));
    }

    #[test]
    fn large_step_triggers_safety_exit() {
        let obj = toy();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let x0 = DenseMatrix::column_vector(&[h, h]);
        let cfg = LandingConfig { alpha: 3.0, max_iter: 50, ..Default::default() };
        let report = run_landing(&obj, &x0, &cfg, &mut NullSink).unwrap();
        assert!(matches!(report.exit_reason, ExitReason::SafetyViolation | ExitReason::NonFinite));
    }

    #[test]
    fn small_pca_converges_to_oracle() {
        let mut rng = Rng::new(21);
        let spectrum = crate::bench::Spectrum::Eigenvalues { values: vec![1.2, 0.6, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0] };
        let obj = crate::bench::generate_pca_instance(8, 2, 30, 21, Some(&spectrum)).unwrap().objective;
        let oracle = optimum_oracle(&obj).unwrap();
        let x0 = crate::manifold::random_stiefel(&mut rng, &StiefelParams::new(8, 2, 0.5).unwrap()).unwrap();
        let info = safe_step_info(&obj, &LandingConfig::default()).unwrap();
        let cfg =
            LandingConfig { alpha: info.alpha_safe, max_iter: 200_000, grad_tol: 1e-10, enforce_safe_step: true, ..Default::default() };
        let mut rec = TraceRecorder::new().with_oracle(&oracle);
        let report = run_landing(&obj, &x0, &cfg, &mut rec).unwrap();
        assert_eq!(report.exit_reason, ExitReason::Converged);
        let last = rec.trace().last().unwrap();
        assert!(last.gap <= 1e-9);
        assert!(last.dist_s.unwrap() <= 1e-6);
        assert!(rec.trace().records.iter().all(|r| r.gap <= 0.5));
    }
}
