use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::experiment::GammaArg;
use crate::error::{invalid, Error, Result};
use crate::landing::{run_landing, LandingConfig};
use crate::linalg::Rng;
use crate::manifold::{sample_safety_region, StiefelParams};
use crate::merit::{
    check_descent_inequality, check_linear_rate, check_pseudo_grad_domination, check_quadratic_growth, estimate_constants,
    sample_near_optimal, CheckResult, ConstantsEstimate, DiagnosticsConfig, RateReport,
};
use crate::objectives::{optimum_oracle, ObjectiveModel, PcaObjective};
use crate::report::{ExitReason, MeritProbe, TraceRecorder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `<Lambda, grad L> >= rho ||Lambda||^2` on the safety region.
    Descent,
    /// `L <= ||Lambda||^2 / mu'` near the solution set.
    GradDomination,
    /// `L >= mu' rho^2 / 4 dist^2` near the solution set.
    QuadraticGrowth,
    /// Monotone merit under the contraction envelope along a landing run.
    LinearRate,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::Descent, Check::GradDomination, Check::QuadraticGrowth, Check::LinearRate];

    /// Short CLI name.
    pub fn name(self) -> &'static str {
        match self {
            Check::Descent => "prop2",
            Check::GradDomination => "lemma1",
            Check::QuadraticGrowth => "lemma2",
            Check::LinearRate => "thm1",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prop2" | "descent" => Ok(Check::Descent),
            "lemma1" | "grad-domination" => Ok(Check::GradDomination),
            "lemma2" | "quadratic-growth" => Ok(Check::QuadraticGrowth),
            "thm1" | "linear-rate" => Ok(Check::LinearRate),
            other => Err(invalid(format!("unknown check '{other}' (expected prop2, lemma1, lemma2 or thm1)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub lambda: f64,
    pub epsilon: f64,
    pub gamma: GammaArg,
    /// Points per sampled check, and samples for constant estimation.
    pub samples: usize,
    /// Neighbourhood radius; near-optimal points lie within `delta / 2`.
    pub delta: f64,
    pub seed: u64,
    /// Iteration cap of the linear-rate run.
    pub rate_max_iter: usize,
    /// Stopping tolerance of the linear-rate run. The merit must stay well
    /// above rounding noise for per-step monotonicity to be observable.
    pub rate_tol: f64,
    pub slack: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: 0.5,
            gamma: GammaArg::Auto,
            samples: 1000,
            delta: 0.5,
            seed: 0,
            rate_max_iter: 200_000,
            rate_tol: 1e-5,
            slack: 1.0 + 1e-8,
        }
    }
}

/// Tally of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: Check,
    pub evaluated: usize,
    pub failed: usize,
    /// Smallest `lhs / rhs` for lower bounds, largest for upper bounds.
    pub worst_ratio: Option<f64>,
    pub first_failure: Option<CheckResult>,
    pub rate: Option<RateReport>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub constants: ConstantsEstimate,
    pub checks: Vec<CheckSummary>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Tally {
    check: Check,
    lower_bound: bool,
    evaluated: usize,
    failed: usize,
    worst: Option<f64>,
    first_failure: Option<CheckResult>,
}

impl Tally {
    fn new(check: Check, lower_bound: bool) -> Self {
        Self { check, lower_bound, evaluated: 0, failed: 0, worst: None, first_failure: None }
    }

    fn add(&mut self, res: CheckResult) {
        self.evaluated += 1;
        if res.rhs != 0.0 {
            let ratio = res.lhs / res.rhs;
            self.worst = Some(match self.worst {
                None => ratio,
                Some(w) if self.lower_bound => w.min(ratio),
                Some(w) => w.max(ratio),
            });
        }
        if !res.passed {
            self.failed += 1;
            self.first_failure.get_or_insert(res);
        }
    }

    fn finish(self) -> CheckSummary {
        CheckSummary {
            check: self.check,
            evaluated: self.evaluated,
            failed: self.failed,
            worst_ratio: self.worst,
            first_failure: self.first_failure,
            rate: None,
            passed: self.failed == 0 && self.evaluated > 0,
        }
    }
}

/// Estimates the constants for `obj` and runs the requested checks.
///
/// Sampled checks draw `spec.samples` points each from independent streams of
/// `spec.seed`. The linear-rate check runs landing from a near-optimal point
/// with step `min{rho / L', alpha_safe}` and records the merit at every iterate.
pub fn verify_objective(obj: &PcaObjective, checks: &[Check], spec: &VerifySpec) -> Result<VerifyReport> {
    if checks.is_empty() {
        return Err(invalid("no checks requested"));
    }
    if spec.samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let oracle = optimum_oracle(obj)?;
    let diag = DiagnosticsConfig { delta: spec.delta, sample_count: spec.samples, tolerance_slack: spec.slack };
    diag.validate()?;
    let constants =
        estimate_constants(obj, &oracle, spec.lambda, spec.epsilon, spec.gamma.value(), &diag, &mut Rng::with_stream(spec.seed, 100))?;
    let (d, r) = obj.shape();
    let params = StiefelParams::new(d, r, spec.epsilon)?;
    let mut out = Vec::new();
    for &check in checks {
        let mut rng = Rng::with_stream(spec.seed, 101 + check as u64);
        let summary = match check {
            Check::Descent => {
                let mut t = Tally::new(check, true);
                for _ in 0..spec.samples {
                    let x = sample_safety_region(&mut rng, &params, spec.epsilon)?;
                    t.add(check_descent_inequality(obj, &x, &constants.params(), spec.slack)?);
                }
                t.finish()
            }
            Check::GradDomination | Check::QuadraticGrowth => {
                let mut t = Tally::new(check, check == Check::QuadraticGrowth);
                for _ in 0..spec.samples {
                    let x = sample_near_optimal(&oracle, spec.epsilon, spec.delta, true, &mut rng)?;
                    let res = if check == Check::GradDomination {
                        check_pseudo_grad_domination(obj, &oracle, &x, &constants, &diag)?
                    } else {
                        check_quadratic_growth(obj, &oracle, &x, &constants, &diag)?
                    };
                    t.add(res);
                }
                t.finish()
            }
            Check::LinearRate => {
                let x0 = sample_near_optimal(&oracle, spec.epsilon, spec.delta, true, &mut rng)?;
                let alpha = constants.theorem_step_bound();
                let cfg = LandingConfig {
                    alpha,
                    lambda: spec.lambda,
                    epsilon: spec.epsilon,
                    max_iter: spec.rate_max_iter,
                    grad_tol: spec.rate_tol,
                    enforce_safe_step: false,
                    seed: spec.seed,
                };
                let mut rec = TraceRecorder::new().with_merit(MeritProbe { gamma: constants.gamma, f_star: oracle.f_star });
                let report = run_landing(obj, &x0, &cfg, &mut rec)?;
                let rate = check_linear_rate(rec.trace(), &constants, alpha, spec.slack)?;
                CheckSummary {
                    check,
                    evaluated: rec.trace().len(),
                    failed: usize::from(!rate.passed),
                    worst_ratio: rate.max_step_ratio,
                    first_failure: None,
                    passed: rate.passed && report.exit_reason != ExitReason::SafetyViolation,
                    rate: Some(rate),
                }
            }
        };
        out.push(summary);
    }
    Ok(VerifyReport { constants, checks: out })
}

/// Parses a comma-separated check list.
pub fn parse_checks(list: &str) -> Result<Vec<Check>> {
    let mut out: Vec<Check> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?;
    out.dedup();
    if out.is_empty() {
        return Err(invalid("no checks requested"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::instance::{generate_pca_instance, Spectrum};

    #[test]
    fn names() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>().unwrap(), c);
        }
        assert_eq!(parse_checks("prop2, thm1").unwrap(), vec![Check::Descent, Check::LinearRate]);
        assert!(parse_checks("").is_err());
        assert!(parse_checks("lemma3").is_err());
    }

    #[test]
    fn all_checks_pass_on_small_instance() {
        let sp = Spectrum::Eigenvalues { values: vec![1.2, 0.6, 0.01, 0.008, 0.006, 0.004, 0.002, 0.001] };
        let inst = generate_pca_instance(8, 2, 20, 5, Some(&sp)).unwrap();
        let spec = VerifySpec { samples: 100, ..Default::default() };
        let rep = verify_objective(&inst.objective, &Check::ALL, &spec).unwrap();
        for c in &rep.checks {
            assert!(c.passed, "{c:?}");
        }
        assert!(rep.all_passed());
    }
}
