//! Comparison solvers: Riemannian gradient descent with a QR or polar
//! retraction, the smoothed ExPen penalty, and a plain quadratic penalty.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::polar::polar_factor_counted;
use crate::linalg::{fro_norm, gram, matmul, matmul_tn, sym, thin_qr, DenseMatrix};
use crate::manifold::{feasibility_gap, on_manifold_tol, riemannian_grad_with_gram};
use crate::objectives::ObjectiveModel;
use crate::report::{ConfigSnapshot, ExitReason, FinalMetrics, FlopCount, IterateState, RunReport, TraceSink};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retraction {
    Qr,
    Polar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub alpha: f64,
    pub retraction: Retraction,
    /// Penalty weight for ExPen and the plain penalty method.
    pub beta: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Radius of the admissible starting region for the infeasible baselines.
    pub epsilon: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { alpha: 0.1, retraction: Retraction::Polar, beta: 1.0, max_iter: 10_000, grad_tol: 1e-6, epsilon: 0.5 }
    }
}

impl BaselineConfig {
    pub fn validate(&self, needs_beta: bool) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if needs_beta && !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(invalid(format!("grad_tol must be nonnegative, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// `|f|` growth factor over `|f(x0)|` treated as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;

fn prod(d: usize, r: usize) -> u64 {
    2 * (d as u64) * (r as u64) * (r as u64)
}

fn check_start(obj: &dyn ObjectiveModel, x0: &DenseMatrix) -> Result<()> {
    if x0.shape() != obj.shape() {
        return Err(Error::DimensionMismatch { op: "baseline start", left: x0.shape(), right: obj.shape() });
    }
    x0.ensure_finite("baseline start")
}

/// Flop estimate for `jacobi_eigh` work on an `r x r` matrix: each rotation
/// updates two rows and two columns of the matrix and two eigenvector rows.
fn jacobi_flops(r: usize, rotations: usize) -> u64 {
    rotations as u64 * (12 * r as u64 + 20)
}

/// Riemannian gradient descent `x <- R_x(-alpha grad f(x))`.
pub fn run_rgd(obj: &dyn ObjectiveModel, x0: &DenseMatrix, cfg: &BaselineConfig, sink: &mut dyn TraceSink) -> Result<RunReport> {
    cfg.validate(false)?;
    check_start(obj, x0)?;
    let (d, r) = obj.shape();
    let gap0 = feasibility_gap(x0)?;
    let tol = 1e-10 * (d as f64 / 1000.0).max(1.0);
    if gap0 > tol {
        return Err(Error::OffManifold { gap: gap0, tolerance: tol });
    }
    let name = match cfg.retraction {
        Retraction::Qr => "rgd-qr",
        Retraction::Polar => "rgd-polar",
    };
    let mut report = RunReport::new(name, obj.descriptor(), ConfigSnapshot::Baseline(cfg.clone()));
    // gradient evaluation + x^T x, g^T x, g S, x (g^T x)
    let base_flops = obj.grad_flops() + 4 * prod(d, r) + 4 * (d * r) as u64;
    let mut total_flops: u64 = 0;
    let mut x = x0.clone();
    let mut wall_ns = 0u64;
    let mut k = 0usize;
    loop {
        let t0 = Instant::now();
        let s = gram(&x)?;
        let (f, g) = obj.value_and_grad(&x)?;
        let rg = riemannian_grad_with_gram(&g, &x, &s)?;
        let gn = fro_norm(&rg);
        let gap = fro_norm(&s.add_diagonal(-1.0));
        wall_ns += t0.elapsed().as_nanos() as u64;
        total_flops += base_flops;
        if !(f.is_finite() && gn.is_finite()) {
            report.exit_reason = ExitReason::NonFinite;
            break;
        }
        sink.record(&IterateState { iter: k, x: &x, f_val: f, euclid_grad: &g, grad_norm: gn, gap, direction: Some(&rg), wall_ns })?;
        report.iterations = k;
        report.final_metrics = FinalMetrics { f_val: f, grad_norm: gn, stop_norm: gn, gap, dist_s: None, merit: None };
        if gn <= cfg.grad_tol {
            report.exit_reason = ExitReason::Converged;
            break;
        }
        if k >= cfg.max_iter {
            report.exit_reason = ExitReason::MaxIter;
            break;
        }
        let t1 = Instant::now();
        let y = x.add_scaled(-cfg.alpha, &rg)?;
        x = match cfg.retraction {
            Retraction::Qr => {
                total_flops += 2 * prod(d, r) + 2 * (d * r) as u64;
                thin_qr(&y)?.0
            }
            Retraction::Polar => {
                let (q, rotations) = polar_factor_counted(&y)?;
                // gram of y, V diag V^T, y S^{-1/2}
                total_flops += 2 * prod(d, r) + 2 * (r * r * r) as u64 + jacobi_flops(r, rotations) + 2 * (d * r) as u64;
                q
            }
        };
        wall_ns += t1.elapsed().as_nanos() as u64;
        k += 1;
    }
    report.wall_ns = wall_ns;
    let iters = report.iterations as u64 + 1;
    report.flops = FlopCount { per_iter: total_flops.div_ceil(iters), total: total_flops };
    Ok(report)
}

/// `E(x) = f(x (3/2 I - x^T x / 2)) + beta/4 ||x^T x - I||^2`.
pub fn expen_value(obj: &dyn ObjectiveModel, x: &DenseMatrix, beta: f64) -> Result<f64> {
    let s = gram(x)?;
    let n = s.add_diagonal(-1.0);
    let m = s.scale(-0.5).add_diagonal(1.5);
    let y = matmul(x, &m)?;
    let gap = fro_norm(&n);
    Ok(obj.value(&y)? + 0.25 * beta * gap * gap)
}

/// `grad E(x) = G M - x sym(x^T G) + beta x (x^T x - I)` with `G = grad f(y)`,
/// `y = x M` and `M = 3/2 I - x^T x / 2`.
pub fn expen_grad(obj: &dyn ObjectiveModel, x: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
    Ok(expen_parts(obj, x, beta)?.grad)
}

struct ExpenParts {
    value: f64,
    f_y: f64,
    grad: DenseMatrix,
    gap: f64,
}

fn expen_parts(obj: &dyn ObjectiveModel, x: &DenseMatrix, beta: f64) -> Result<ExpenParts> {
    let s = gram(x)?;
    let n = s.add_diagonal(-1.0);
    let m = s.scale(-0.5).add_diagonal(1.5);
    let y = matmul(x, &m)?;
    let (f_y, gy) = obj.value_and_grad(&y)?;
    let inner_term = sym(&matmul_tn(x, &gy)?)?.sub(&n.scale(beta))?;
    let mut grad = matmul(&gy, &m)?;
    grad.axpy(-1.0, &matmul(x, &inner_term)?)?;
    let gap = fro_norm(&n);
    Ok(ExpenParts { value: f_y + 0.25 * beta * gap * gap, f_y, grad, gap })
}

#[derive(Clone, Copy)]
enum PenaltyKind {
    Expen,
    Plain,
}

/// Plain gradient descent on the ExPen function.
pub fn run_expen(obj: &dyn ObjectiveModel, x0: &DenseMatrix, cfg: &BaselineConfig, sink: &mut dyn TraceSink) -> Result<RunReport> {
    run_penalty_like(obj, x0, cfg, sink, PenaltyKind::Expen)
}

/// Plain gradient descent on `f + beta p`. Its limit points are generally
/// not feasible.
pub fn run_penalty(obj: &dyn ObjectiveModel, x0: &DenseMatrix, cfg: &BaselineConfig, sink: &mut dyn TraceSink) -> Result<RunReport> {
    run_penalty_like(obj, x0, cfg, sink, PenaltyKind::Plain)
}

fn run_penalty_like(
    obj: &dyn ObjectiveModel,
    x0: &DenseMatrix,
    cfg: &BaselineConfig,
    sink: &mut dyn TraceSink,
    kind: PenaltyKind,
) -> Result<RunReport> {
    cfg.validate(true)?;
    check_start(obj, x0)?;
    let (d, r) = obj.shape();
    let gap0 = feasibility_gap(x0)?;
    if gap0 > cfg.epsilon.max(on_manifold_tol(d)) {
        return Err(Error::OutsideRegion { region: "safety region", value: gap0, limit: cfg.epsilon });
    }
    let name = match kind {
        PenaltyKind::Expen => "expen",
        PenaltyKind::Plain => "penalty",
    };
    let mut report = RunReport::new(name, obj.descriptor(), ConfigSnapshot::Baseline(cfg.clone()));
    let dr = (d * r) as u64;
    let per_iter = match kind {
        // x^T x, y = x M, G M, x^T G, x (sym - beta N)
        PenaltyKind::Expen => obj.grad_flops() + 5 * prod(d, r) + 6 * dr,
        // x^T x, x N
        PenaltyKind::Plain => obj.grad_flops() + 2 * prod(d, r) + 4 * dr,
    };
    let mut x = x0.clone();
    let mut f0: Option<f64> = None;
    let mut wall_ns = 0u64;
    let mut k = 0usize;
    loop {
        let t0 = Instant::now();
        let step = match kind {
            PenaltyKind::Expen => expen_parts(obj, &x, cfg.beta).map(|p| (p.grad, p.gap, p.value, p.f_y)),
            PenaltyKind::Plain => (|| {
                let s = gram(&x)?;
                let n = s.add_diagonal(-1.0);
                let (f, g) = obj.value_and_grad(&x)?;
                let mut grad = matmul(&x, &n)?.scale(cfg.beta);
                grad.axpy(1.0, &g)?;
                let gap = fro_norm(&n);
                Ok((grad, gap, f + 0.25 * cfg.beta * gap * gap, f))
            })(),
        };
        let (dir, gap, obj_val, _) = match step {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                report.exit_reason = ExitReason::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        let stop_norm = fro_norm(&dir);
        wall_ns += t0.elapsed().as_nanos() as u64;

        // Metrics at x itself, outside the timed region.
        let (f, g) = match obj.value_and_grad(&x) {
            Ok(v) => v,
            Err(Error::NonFinite { .. }) => {
                report.exit_reason = ExitReason::NonFinite;
                break;
            }
            Err(e) => return Err(e),
        };
        if !(f.is_finite() && stop_norm.is_finite() && obj_val.is_finite()) {
            report.exit_reason = ExitReason::NonFinite;
            break;
        }
        let rg = riemannian_grad_with_gram(&g, &x, &gram(&x)?)?;
        let gn = fro_norm(&rg);
        sink.record(&IterateState { iter: k, x: &x, f_val: f, euclid_grad: &g, grad_norm: gn, gap, direction: Some(&dir), wall_ns })?;
        report.iterations = k;
        report.final_metrics = FinalMetrics { f_val: f, grad_norm: gn, stop_norm, gap, dist_s: None, merit: None };
        let f0v = *f0.get_or_insert(f.abs());
        if f.abs() > DIVERGENCE_FACTOR * f0v.max(f64::MIN_POSITIVE) && f.abs() > 1e-300 {
            report.exit_reason = ExitReason::Diverged;
            break;
        }
        if stop_norm <= cfg.grad_tol {
            report.exit_reason = ExitReason::Converged;
            break;
        }
        if k >= cfg.max_iter {
            report.exit_reason = ExitReason::MaxIter;
            break;
        }
        let t1 = Instant::now();
        x.axpy(-cfg.alpha, &dir)?;
        wall_ns += t1.elapsed().as_nanos() as u64;
        k += 1;
    }
    report.wall_ns = wall_ns;
    report.flops = FlopCount { per_iter, total: per_iter * (report.iterations as u64 + 1) };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, Rng};
    use crate::manifold::{random_stiefel, sample_safety_region, StiefelParams};
    use crate::objectives::{default_weights, dist_to_solution, finite_diff, optimum_oracle, PcaObjective, ZeroObjective};
    use crate::report::{NullSink, TraceRecorder};

    fn instance(seed: u64) -> PcaObjective {
        let a = gaussian_matrix(&mut Rng::new(seed), 30, 8);
        PcaObjective::from_data(&a, default_weights(2)).unwrap()
    }

    #[test]
    fn expen_collapses_on_manifold() {
        let obj = instance(1);
        let x = random_stiefel(&mut Rng::new(2), &StiefelParams::new(8, 2, 0.5).unwrap()).unwrap();
        let e = expen_value(&obj, &x, 3.0).unwrap();
        assert!((e - obj.value(&x).unwrap()).abs() <= 1e-12 * e.abs());
    }

    #[test]
    fn expen_grad_matches_fd() {
        let obj = instance(3);
        let p = StiefelParams::new(8, 2, 0.5).unwrap();
        let mut rng = Rng::new(4);
        for _ in 0..5 {
            let x = sample_safety_region(&mut rng, &p, 0.5).unwrap();
            let g = expen_grad(&obj, &x, 2.0).unwrap();
            let fd = finite_diff(|y| expen_value(&obj, y, 2.0), &x, 1e-5).unwrap();
            assert!(fro_norm(&g.sub(&fd).unwrap()) <= 1e-7 * fro_norm(&g));
        }
    }

    #[test]
    fn rgd_converges_and_stays_feasible() {
        let obj = instance(5);
        let oracle = optimum_oracle(&obj).unwrap();
        let x0 = random_stiefel(&mut Rng::new(6), &StiefelParams::new(8, 2, 0.5).unwrap()).unwrap();
        let alpha = 0.5 / obj.lipschitz_bound().unwrap();
        for retraction in [Retraction::Qr, Retraction::Polar] {
            let cfg = BaselineConfig { alpha, retraction, max_iter: 50_000, grad_tol: 1e-10, ..Default::default() };
            let mut rec = TraceRecorder::new().with_oracle(&oracle);
            let rep = run_rgd(&obj, &x0, &cfg, &mut rec).unwrap();
            assert!(rep.converged(), "{:?}", rep.exit_reason);
            assert!(rec.trace().records.iter().all(|r| r.gap <= 1e-9));
            assert!(rec.trace().last().unwrap().dist_s.unwrap() <= 1e-6);
        }
        let stationary = oracle.v_top.clone();
        let rep = run_rgd(&obj, &stationary, &BaselineConfig { alpha, grad_tol: 1e-8, ..Default::default() }, &mut NullSink).unwrap();
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn expen_converges_to_oracle() {
        let obj = instance(7);
        let oracle = optimum_oracle(&obj).unwrap();
        let x0 = random_stiefel(&mut Rng::new(8), &StiefelParams::new(8, 2, 0.5).unwrap()).unwrap();
        let alpha = 0.2 / obj.lipschitz_bound().unwrap();
        let cfg = BaselineConfig { alpha, beta: 1.0, max_iter: 100_000, grad_tol: 1e-10, ..Default::default() };
        let mut rec = TraceRecorder::new().with_oracle(&oracle);
        let rep = run_expen(&obj, &x0, &cfg, &mut rec).unwrap();
        assert!(rep.converged(), "{:?}", rep.exit_reason);
        let last = rec.trace().last().unwrap();
        assert!(last.gap <= 1e-6);
        assert!(last.dist_s.unwrap() <= 1e-5);
    }

    #[test]
    fn penalty_gaps_shrink_with_beta() {
        let obj = instance(9);
        let x0 = random_stiefel(&mut Rng::new(10), &StiefelParams::new(8, 2, 0.5).unwrap()).unwrap();
        let mut gaps = Vec::new();
        for beta in [1.0, 10.0, 100.0] {
            let alpha = 0.2 / (obj.lipschitz_bound().unwrap() + 3.0 * beta);
            let cfg = BaselineConfig { alpha, beta, max_iter: 200_000, grad_tol: 1e-10, ..Default::default() };
            let rep = run_penalty(&obj, &x0, &cfg, &mut NullSink).unwrap();
            assert!(rep.converged());
            gaps.push(rep.final_metrics.gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[1] > 1e-6);

        let zero = ZeroObjective { d: 8, r: 2 };
        let x = sample_safety_region(&mut Rng::new(1), &StiefelParams::new(8, 2, 0.5).unwrap(), 0.4).unwrap();
        let rep = run_penalty(
            &zero,
            &x,
            &BaselineConfig { alpha: 0.1, beta: 1.0, max_iter: 100_000, grad_tol: 1e-12, ..Default::default() },
            &mut NullSink,
        )
        .unwrap();
        assert!(rep.final_metrics.gap < 1e-10);
        let _ = dist_to_solution;
    }
}
