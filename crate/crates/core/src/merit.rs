//! Merit function `L(x) = (f(x) - f*) + h(x) + gamma p(x)` and the inequality
//! checks built on it.
//!
//! `h(x) = -<sym(x^T grad f(x)), x^T x - I> / 2` cancels the first-order
//! effect of infeasibility on `f`, so a single scalar certifies progress in
//! both optimality and feasibility. Every check returns both sides of its
//! inequality; constants carry their provenance because a failed check with
//! sampled constants does not by itself indicate a bug.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bench::fit::fit_linear_rate;
use crate::error::{invalid, Error, Result};
use crate::landing::{estimate_grad_bound, field_parts, penalty_grad, safe_step};
use crate::linalg::{fro_norm, gaussian_matrix, gram, inner, matmul, matmul_tn, sym, DenseMatrix, Rng};
use crate::manifold::{feasibility_gap, inflate_to_gap, random_tangent, retract_qr, sample_safety_region, StiefelParams};
use crate::objectives::{dist_to_solution, estimate_pl_constant, random_solution, ObjectiveModel, SolutionOracle};
use crate::report::{DescentTally, IterateState, IterateTrace, Metric, Provenance, RateFit, TraceSink};

/// Inflation applied to sampled suprema and Lipschitz ratios.
pub const SAMPLED_INFLATION: f64 = 1.5;

/// `h(x)` from an iterate and its Euclidean gradient.
pub fn h_from_grad(x: &DenseMatrix, euclid_grad: &DenseMatrix) -> Result<f64> {
    let n = gram(x)?.add_diagonal(-1.0);
    let a = sym(&matmul_tn(x, euclid_grad)?)?;
    Ok(-0.5 * inner(&a, &n)?)
}

pub fn h_term(obj: &dyn ObjectiveModel, x: &DenseMatrix) -> Result<f64> {
    h_from_grad(x, &obj.euclid_grad(x)?)
}

/// Merit value from quantities a solver already holds.
pub fn merit_from_parts(x: &DenseMatrix, f_val: f64, euclid_grad: &DenseMatrix, gamma: f64, f_star: f64) -> Result<f64> {
    let n = gram(x)?.add_diagonal(-1.0);
    let a = sym(&matmul_tn(x, euclid_grad)?)?;
    let h = -0.5 * inner(&a, &n)?;
    let gap = fro_norm(&n);
    Ok((f_val - f_star) + h + gamma * 0.25 * gap * gap)
}

pub fn merit_eval(obj: &dyn ObjectiveModel, x: &DenseMatrix, gamma: f64, f_star: f64) -> Result<f64> {
    let (f, g) = obj.value_and_grad(x)?;
    merit_from_parts(x, f, &g, gamma, f_star)
}

/// Hessian-vector product, by central differences of the gradient when the
/// objective has no closed form.
fn hess_vec_or_fd(obj: &dyn ObjectiveModel, x: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    if let Some(hv) = obj.hess_vec(x, v) {
        return hv;
    }
    let nv = fro_norm(v);
    if nv == 0.0 {
        return Ok(DenseMatrix::zeros(v.rows(), v.cols()));
    }
    let t = 1e-6 * (1.0 + fro_norm(x)) / nv;
    let up = obj.euclid_grad(&x.add_scaled(t, v)?)?;
    let down = obj.euclid_grad(&x.add_scaled(-t, v)?)?;
    Ok(up.sub(&down)?.scale(0.5 / t))
}

/// `grad h = -H[xN]/2 - grad f N / 2 - x sym(x^T grad f)` with `N = x^T x - I`.
fn h_grad(obj: &dyn ObjectiveModel, x: &DenseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
    let n = gram(x)?.add_diagonal(-1.0);
    let xn = matmul(x, &n)?;
    let mut out = hess_vec_or_fd(obj, x, &xn)?.scale(-0.5);
    out.axpy(-0.5, &matmul(g, &n)?)?;
    out.axpy(-1.0, &matmul(x, &sym(&matmul_tn(x, g)?)?)?)?;
    Ok(out)
}

pub(crate) fn merit_grad_from_parts(obj: &dyn ObjectiveModel, x: &DenseMatrix, g: &DenseMatrix, gamma: f64) -> Result<DenseMatrix> {
    let mut out = g.add(&h_grad(obj, x, g)?)?;
    out.axpy(gamma, &penalty_grad(x)?)?;
    Ok(out)
}

/// Gradient of the merit function. Exact for objectives with a Hessian; the
/// Hessian term falls back to finite differences otherwise.
pub fn merit_grad(obj: &dyn ObjectiveModel, x: &DenseMatrix, gamma: f64) -> Result<DenseMatrix> {
    let g = obj.euclid_grad(x)?;
    merit_grad_from_parts(obj, x, &g, gamma)
}

/// `lambda`, `gamma` and `epsilon` of a merit analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeritParams {
    pub lambda: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl MeritParams {
    pub fn rho(&self) -> f64 {
        rho_constant(self.gamma, self.lambda, self.epsilon)
    }
}

/// Theory constants with the provenance of each estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub lambda: f64,
    pub epsilon: f64,
    /// Lipschitz constant of the Euclidean gradient.
    pub l_smooth: f64,
    /// `max(L, sup ||grad f||)` over the safety region.
    pub l_hat: f64,
    /// `sup ||sym(x^T grad f(x))||_F` over the safety region.
    pub s_sym: f64,
    pub g_bound: f64,
    pub gamma_lo: f64,
    pub gamma: f64,
    pub rho: f64,
    pub mu: f64,
    pub mu_prime: f64,
    pub l_lambda: f64,
    pub l_merit: f64,
    pub l_prime: f64,
    pub alpha_safe: f64,
    pub provenance: BTreeMap<String, Provenance>,
}

impl ConstantsEstimate {
    pub fn params(&self) -> MeritParams {
        MeritParams { lambda: self.lambda, gamma: self.gamma, epsilon: self.epsilon }
    }

    /// Largest step covered by the linear-rate guarantee: `min{rho / L', alpha_safe}`.
    pub fn theorem_step_bound(&self) -> f64 {
        (self.rho / self.l_prime).min(self.alpha_safe)
    }

    /// Contraction factor `1 - alpha rho mu' / 2` of the merit envelope.
    pub fn rate_factor(&self, alpha: f64) -> f64 {
        1.0 - alpha * self.rho * self.mu_prime / 2.0
    }
}

/// Inputs of the lower bound on `gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessConstants {
    pub l_smooth: f64,
    pub s_sym: f64,
    pub l_hat: f64,
}

/// `gamma_lo = 2 / (3 - 4e) * (L (1-e) + 3 s + L^2_hat (1+e)^2 / (lambda (1-e)))`.
pub fn gamma_lower_bound(c: &SmoothnessConstants, lambda: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.75) {
        return Err(invalid(format!("epsilon must lie in (0, 3/4), got {epsilon}")));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let e = epsilon;
    Ok(2.0 / (3.0 - 4.0 * e) * (c.l_smooth * (1.0 - e) + 3.0 * c.s_sym + c.l_hat * c.l_hat * (1.0 + e) * (1.0 + e) / (lambda * (1.0 - e))))
}

/// `rho = min{1/2, gamma / (4 lambda (1+e))}`.
pub fn rho_constant(gamma: f64, lambda: f64, epsilon: f64) -> f64 {
    0.5f64.min(gamma / (4.0 * lambda * (1.0 + epsilon)))
}

/// `1/mu' = max{1/mu, (2 (3+2e)^2 L^2_hat + mu L') / (2 mu lambda^2 (1-e)^2)}`.
pub fn mu_prime_constant(mu: f64, l_hat: f64, l_prime: f64, lambda: f64, epsilon: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    let e = epsilon;
    let second = (2.0 * (3.0 + 2.0 * e).powi(2) * l_hat * l_hat + mu * l_prime) / (2.0 * mu * lambda * lambda * (1.0 - e).powi(2));
    Ok(1.0 / (1.0 / mu).max(second))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Neighbourhood radius around the solution set.
    pub delta: f64,
    pub sample_count: usize,
    /// Multiplicative slack for inequality checks.
    pub tolerance_slack: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { delta: 0.5, sample_count: 1000, tolerance_slack: 1.0 + 1e-8 }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.tolerance_slack >= 1.0) {
            return Err(invalid(format!("tolerance slack must be at least 1, got {}", self.tolerance_slack)));
        }
        Ok(())
    }
}

/// Both sides of an inequality and whether it held.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

impl CheckResult {
    /// `lhs >= rhs` up to `(slack - 1) * max(|lhs|, |rhs|)`.
    pub fn at_least(lhs: f64, rhs: f64, slack: f64) -> Self {
        let passed = rhs - lhs <= (slack - 1.0) * lhs.abs().max(rhs.abs());
        Self { lhs, rhs, passed }
    }

    /// `lhs <= rhs` up to `(slack - 1) * max(|lhs|, |rhs|)`.
    pub fn at_most(lhs: f64, rhs: f64, slack: f64) -> Self {
        let passed = lhs - rhs <= (slack - 1.0) * lhs.abs().max(rhs.abs());
        Self { lhs, rhs, passed }
    }
}

fn require_region(x: &DenseMatrix, epsilon: f64) -> Result<()> {
    let gap = feasibility_gap(x)?;
    if gap > epsilon {
        return Err(Error::OutsideRegion { region: "safety region", value: gap, limit: epsilon });
    }
    Ok(())
}

fn require_neighbourhood(oracle: &SolutionOracle, x: &DenseMatrix, epsilon: f64, delta: f64) -> Result<f64> {
    require_region(x, epsilon)?;
    let dist = dist_to_solution(oracle, x)?;
    if dist > delta {
        return Err(Error::OutsideRegion { region: "solution neighbourhood", value: dist, limit: delta });
    }
    Ok(dist)
}

/// `<Lambda(x), grad L(x)> >= rho ||Lambda(x)||^2`.
pub fn check_descent_inequality(obj: &dyn ObjectiveModel, x: &DenseMatrix, params: &MeritParams, slack: f64) -> Result<CheckResult> {
    require_region(x, params.epsilon)?;
    let parts = field_parts(obj, x, params.lambda)?;
    let mg = merit_grad_from_parts(obj, x, &parts.euclid_grad, params.gamma)?;
    descent_from(&parts.field, &mg, params.rho(), slack)
}

fn descent_from(field: &DenseMatrix, merit_grad: &DenseMatrix, rho: f64, slack: f64) -> Result<CheckResult> {
    let lhs = inner(field, merit_grad)?;
    let nf = fro_norm(field);
    Ok(CheckResult::at_least(lhs, rho * nf * nf, slack))
}

/// `L(x) <= ||Lambda(x)||^2 / mu'` near the solution set.
pub fn check_pseudo_grad_domination(
    obj: &dyn ObjectiveModel,
    oracle: &SolutionOracle,
    x: &DenseMatrix,
    consts: &ConstantsEstimate,
    cfg: &DiagnosticsConfig,
) -> Result<CheckResult> {
    require_neighbourhood(oracle, x, consts.epsilon, cfg.delta)?;
    let parts = field_parts(obj, x, consts.lambda)?;
    let merit = merit_from_parts(x, parts.f_val, &parts.euclid_grad, consts.gamma, oracle.f_star)?;
    let nf = fro_norm(&parts.field);
    Ok(CheckResult::at_most(merit, nf * nf / consts.mu_prime, cfg.tolerance_slack))
}

/// `L(x) >= mu' rho^2 / 4 * dist(S, x)^2` near the solution set.
pub fn check_quadratic_growth(
    obj: &dyn ObjectiveModel,
    oracle: &SolutionOracle,
    x: &DenseMatrix,
    consts: &ConstantsEstimate,
    cfg: &DiagnosticsConfig,
) -> Result<CheckResult> {
    let dist = require_neighbourhood(oracle, x, consts.epsilon, cfg.delta)?;
    let merit = merit_eval(obj, x, consts.gamma, oracle.f_star)?;
    let rhs = consts.mu_prime * consts.rho * consts.rho / 4.0 * dist * dist;
    Ok(CheckResult::at_least(merit, rhs, cfg.tolerance_slack))
}

/// Outcome of the post-hoc linear-rate check on a merit trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub alpha: f64,
    /// `1 - alpha rho mu' / 2`.
    pub factor: f64,
    pub monotone: bool,
    pub first_increase: Option<usize>,
    pub envelope_holds: bool,
    pub first_envelope_violation: Option<usize>,
    /// Largest observed `L_{k+1} / L_k` (over steps with `L_k > 0`).
    pub max_step_ratio: Option<f64>,
    pub per_step_within_factor: bool,
    pub fit: Option<RateFit>,
    pub passed: bool,
}

/// Checks monotonicity of the merit column, the envelope
/// `L_k <= factor^k L_0 * slack`, and fits a log-linear rate to the tail half.
pub fn check_linear_rate(trace: &IterateTrace, consts: &ConstantsEstimate, alpha: f64, slack: f64) -> Result<RateReport> {
    let bound = consts.theorem_step_bound();
    if alpha > bound * (1.0 + 1e-12) {
        return Err(Error::UnsafeStep { alpha, alpha_safe: bound });
    }
    let merits: Vec<f64> = trace
        .records
        .iter()
        .map(|r| r.merit.ok_or_else(|| invalid(format!("trace has no merit value at iteration {}", r.iter))))
        .collect::<Result<_>>()?;
    let factor = consts.rate_factor(alpha);
    let l0 = merits.first().copied().unwrap_or(0.0);
    let mut first_increase = None;
    let mut first_envelope_violation = None;
    let mut max_ratio: Option<f64> = None;
    let mut per_step = true;
    for (k, w) in merits.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if first_increase.is_none() && !CheckResult::at_most(b, a, slack).passed {
            first_increase = Some(trace.records[k + 1].iter);
        }
        if a > 0.0 {
            let ratio = b / a;
            max_ratio = Some(max_ratio.map_or(ratio, |m: f64| m.max(ratio)));
            if !CheckResult::at_most(b, factor * a, slack).passed {
                per_step = false;
            }
        }
    }
    for (rec, &m) in trace.records.iter().zip(&merits) {
        let env = factor.powf(rec.iter as f64) * l0;
        if !CheckResult::at_most(m, env, slack).passed {
            first_envelope_violation = Some(rec.iter);
            break;
        }
    }
    let fit = if trace.len() >= 20 { fit_linear_rate(trace, Metric::Merit, 0.5).ok() } else { None };
    let monotone = first_increase.is_none();
    let envelope_holds = first_envelope_violation.is_none();
    Ok(RateReport {
        alpha,
        factor,
        monotone,
        first_increase,
        envelope_holds,
        first_envelope_violation,
        max_step_ratio: max_ratio,
        per_step_within_factor: per_step,
        fit,
        passed: monotone && envelope_holds,
    })
}

/// Point near the solution set: a random member of the set moved along a
/// tangent direction by `u` in `[1e-4, delta/2]`, retracted, and (if
/// `inflate`) pushed off the manifold to a gap of at most `epsilon/2`.
/// Candidates farther than `delta` from the set are redrawn.
pub fn sample_near_optimal(oracle: &SolutionOracle, epsilon: f64, delta: f64, inflate: bool, rng: &mut Rng) -> Result<DenseMatrix> {
    for _ in 0..1000 {
        let base = random_solution(oracle, rng);
        let dir = random_tangent(rng, &base)?;
        let n = fro_norm(&dir);
        if n == 0.0 {
            continue;
        }
        let u = rng.uniform_range(1e-4, (delta / 2.0).max(1e-4));
        let mut x = retract_qr(&base, &dir.scale(u / n))?;
        if inflate {
            let gap = rng.uniform() * epsilon / 2.0;
            x = inflate_to_gap(rng, &x, gap)?;
        }
        if dist_to_solution(oracle, &x)? <= delta {
            return Ok(x);
        }
    }
    Err(invalid("could not sample a point inside the neighbourhood"))
}

/// Largest observed `||F(x) - F(y)|| / ||x - y||` over nearby pairs in the safety region.
fn empirical_lipschitz(
    map: &dyn Fn(&DenseMatrix) -> Result<DenseMatrix>,
    params: &StiefelParams,
    pairs: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = sample_safety_region(rng, params, params.epsilon)?;
        let z = gaussian_matrix(rng, params.d, params.r);
        let t = 10f64.powf(rng.uniform_range(-3.0, -0.5));
        let y = x.add_scaled(t / fro_norm(&z), &z)?;
        if feasibility_gap(&y)? > params.epsilon {
            continue;
        }
        let num = fro_norm(&map(&x)?.sub(&map(&y)?)?);
        worst = worst.max(num / fro_norm(&x.sub(&y)?));
    }
    Ok(worst)
}

/// Estimates every constant of the merit analysis.
///
/// `L`, `sup ||grad f||`, `s` and `G` are analytic when the objective supplies
/// Lipschitz and gradient bounds, otherwise sampled and inflated by 1.5.
/// `mu`, `L_Lambda` and `L_merit` are always sampled. `gamma` defaults to the
/// lower bound and is rejected if below it.
pub fn estimate_constants(
    obj: &dyn ObjectiveModel,
    oracle: &SolutionOracle,
    lambda: f64,
    epsilon: f64,
    gamma: Option<f64>,
    cfg: &DiagnosticsConfig,
    rng: &mut Rng,
) -> Result<ConstantsEstimate> {
    cfg.validate()?;
    let (d, r) = obj.shape();
    let params = StiefelParams::new(d, r, epsilon)?;
    let mut provenance = BTreeMap::new();
    let mut tag = |name: &str, p: Provenance| {
        provenance.insert(name.to_string(), p);
    };

    let (l_smooth, sup_grad, s_sym) = match (obj.lipschitz_bound(), obj.grad_norm_bound(epsilon)) {
        (Some(l), Some(sup)) => {
            tag("l_smooth", Provenance::Analytic);
            tag("l_hat", Provenance::Analytic);
            tag("s_sym", Provenance::Analytic);
            (l, sup, (1.0 + epsilon).sqrt() * sup)
        }
        _ => {
            let mut sup: f64 = 0.0;
            let mut s: f64 = 0.0;
            for _ in 0..cfg.sample_count.max(1) {
                let x = sample_safety_region(rng, &params, epsilon)?;
                let g = obj.euclid_grad(&x)?;
                sup = sup.max(fro_norm(&g));
                s = s.max(fro_norm(&sym(&matmul_tn(&x, &g)?)?));
            }
            let l = empirical_lipschitz(&|x| obj.euclid_grad(x), &params, cfg.sample_count, rng)?;
            tag("l_smooth", Provenance::Sampled);
            tag("l_hat", Provenance::Sampled);
            tag("s_sym", Provenance::Sampled);
            (SAMPLED_INFLATION * l, SAMPLED_INFLATION * sup, SAMPLED_INFLATION * s)
        }
    };
    let l_hat = l_smooth.max(sup_grad);
    let g = estimate_grad_bound(obj, &params, cfg.sample_count.max(1), rng)?;
    tag("g_bound", g.provenance);
    let alpha_safe = safe_step(g.value, lambda, epsilon)?;

    let gamma_lo = gamma_lower_bound(&SmoothnessConstants { l_smooth, s_sym, l_hat }, lambda, epsilon)?;
    let gamma = match gamma {
        Some(gm) if gm < gamma_lo => {
            return Err(invalid(format!("gamma {gm} is below the lower bound {gamma_lo}")));
        }
        Some(gm) => gm,
        None => gamma_lo,
    };
    let rho = rho_constant(gamma, lambda, epsilon);

    let mu = estimate_pl_constant(obj, oracle, cfg.delta, cfg.sample_count, rng)?;
    tag("mu", Provenance::Sampled);
    let l_lambda = empirical_lipschitz(&|x| Ok(field_parts(obj, x, lambda)?.field), &params, cfg.sample_count, rng)?;
    tag("l_lambda", Provenance::Sampled);
    let emp_merit = empirical_lipschitz(&|x| merit_grad(obj, x, gamma), &params, cfg.sample_count, rng)?;
    let emp_fh = empirical_lipschitz(&|x| merit_grad(obj, x, 0.0), &params, cfg.sample_count, rng)?;
    let l_merit = emp_merit.min(emp_fh + (2.0 + 3.0 * epsilon) * gamma);
    tag("l_merit", Provenance::Sampled);
    let l_prime = l_hat.max(l_lambda).max(l_merit);
    let mu_prime = mu_prime_constant(mu, l_hat, l_prime, lambda, epsilon)?;

    Ok(ConstantsEstimate {
        lambda,
        epsilon,
        l_smooth,
        l_hat,
        s_sym,
        g_bound: g.value,
        gamma_lo,
        gamma,
        rho,
        mu,
        mu_prime,
        l_lambda,
        l_merit,
        l_prime,
        alpha_safe,
        provenance,
    })
}

/// Trace sink that checks the descent inequality at every iterate.
pub struct DescentMonitor<'a> {
    obj: &'a dyn ObjectiveModel,
    params: MeritParams,
    slack: f64,
    pub checked: usize,
    pub failures: usize,
    /// Smallest `lhs / rhs` seen over iterates with a nonzero right side.
    pub min_ratio: Option<f64>,
    pub first_failure: Option<(usize, CheckResult)>,
}

impl<'a> DescentMonitor<'a> {
    pub fn new(obj: &'a dyn ObjectiveModel, params: MeritParams, slack: f64) -> Self {
        Self { obj, params, slack, checked: 0, failures: 0, min_ratio: None, first_failure: None }
    }
}

impl DescentMonitor<'_> {
    pub fn tally(&self) -> DescentTally {
        DescentTally {
            checked: self.checked,
            failures: self.failures,
            min_ratio: self.min_ratio,
            first_failure: self.first_failure.as_ref().map(|(k, _)| *k),
        }
    }
}

impl TraceSink for DescentMonitor<'_> {
    fn record(&mut self, s: &IterateState<'_>) -> Result<()> {
        let field = match s.direction {
            Some(f) => f.clone(),
            None => field_parts(self.obj, s.x, self.params.lambda)?.field,
        };
        let mg = merit_grad_from_parts(self.obj, s.x, s.euclid_grad, self.params.gamma)?;
        let res = descent_from(&field, &mg, self.params.rho(), self.slack)?;
        self.checked += 1;
        if res.rhs > 0.0 {
            let ratio = res.lhs / res.rhs;
            self.min_ratio = Some(self.min_ratio.map_or(ratio, |m| m.min(ratio)));
        }
        if !res.passed {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some((s.iter, res));
            }
        }
        Ok(())
    }
}
