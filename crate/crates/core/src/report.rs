//! Per-iteration traces, trace sinks and end-of-run reports.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{DenseMatrix, RNG_ALGORITHM};
use crate::merit::{merit_from_parts, ConstantsEstimate, RateReport};
use crate::objectives::{dist_to_solution, SolutionOracle};

/// One row of a trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub f_val: f64,
    /// `||grad f(x)||_F` (relative gradient for infeasible methods).
    pub grad_norm: f64,
    /// `||x^T x - I||_F`.
    pub gap: f64,
    pub merit: Option<f64>,
    pub dist_s: Option<f64>,
    /// Cumulative solver time, excluding trace handling.
    pub wall_ns: u64,
}

/// Sequence of records with strictly increasing `iter` and nondecreasing `wall_ns`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Merit,
    GradNorm,
    DistS,
    Gap,
    FVal,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merit" => Ok(Self::Merit),
            "grad_norm" | "grad" => Ok(Self::GradNorm),
            "dist_s" | "dist" => Ok(Self::DistS),
            "gap" => Ok(Self::Gap),
            "f_val" => Ok(Self::FVal),
            other => Err(invalid(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Merit => "merit",
            Self::GradNorm => "grad_norm",
            Self::DistS => "dist_s",
            Self::Gap => "gap",
            Self::FVal => "f_val",
        };
        f.write_str(s)
    }
}

impl IterateRecord {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Merit => self.merit,
            Metric::GradNorm => Some(self.grad_norm),
            Metric::DistS => self.dist_s,
            Metric::Gap => Some(self.gap),
            Metric::FVal => Some(self.f_val),
        }
    }
}

impl IterateTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rec: IterateRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.iter <= last.iter {
                return Err(Error::Format(format!("iteration {} after {}", rec.iter, last.iter)));
            }
            if rec.wall_ns < last.wall_ns {
                return Err(Error::Format(format!("wall time decreased at iteration {}", rec.iter)));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// Checks the ordering invariants of a trace loaded from elsewhere.
    pub fn validate(&self) -> Result<()> {
        let mut copy = IterateTrace::new();
        for r in &self.records {
            copy.push(r.clone())?;
        }
        Ok(())
    }
}

/// What a solver exposes about the current iterate.
pub struct IterateState<'a> {
    pub iter: usize,
    pub x: &'a DenseMatrix,
    pub f_val: f64,
    pub euclid_grad: &'a DenseMatrix,
    pub grad_norm: f64,
    pub gap: f64,
    /// Search direction used for the next step (the landing field for landing).
    pub direction: Option<&'a DenseMatrix>,
    pub wall_ns: u64,
}

/// Receives every iterate of a run.
pub trait TraceSink {
    fn record(&mut self, state: &IterateState<'_>) -> Result<()>;
}

/// Discards everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _state: &IterateState<'_>) -> Result<()> {
        Ok(())
    }
}

impl<S: TraceSink + ?Sized> TraceSink for &mut S {
    fn record(&mut self, state: &IterateState<'_>) -> Result<()> {
        (**self).record(state)
    }
}

impl<A: TraceSink, B: TraceSink> TraceSink for (A, B) {
    fn record(&mut self, state: &IterateState<'_>) -> Result<()> {
        self.0.record(state)?;
        self.1.record(state)
    }
}

/// Parameters needed to evaluate the merit function from an iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeritProbe {
    pub gamma: f64,
    pub f_star: f64,
}

/// Builds an [`IterateTrace`], optionally filling the merit and distance columns.
#[derive(Debug, Default)]
pub struct TraceRecorder<'a> {
    oracle: Option<&'a SolutionOracle>,
    merit: Option<MeritProbe>,
    trace: IterateTrace,
}

impl<'a> TraceRecorder<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_oracle(mut self, oracle: &'a SolutionOracle) -> Self {
        self.oracle = Some(oracle);
        self
    }

    pub fn with_merit(mut self, probe: MeritProbe) -> Self {
        self.merit = Some(probe);
        self
    }

    pub fn trace(&self) -> &IterateTrace {
        &self.trace
    }

    pub fn into_trace(self) -> IterateTrace {
        self.trace
    }
}

impl TraceSink for TraceRecorder<'_> {
    fn record(&mut self, s: &IterateState<'_>) -> Result<()> {
        let dist_s = self.oracle.map(|o| dist_to_solution(o, s.x)).transpose()?;
        let merit = self.merit.map(|p| merit_from_parts(s.x, s.f_val, s.euclid_grad, p.gamma, p.f_star)).transpose()?;
        self.trace.push(IterateRecord {
            iter: s.iter,
            f_val: s.f_val,
            grad_norm: s.grad_norm,
            gap: s.gap,
            merit,
            dist_s,
            wall_ns: s.wall_ns,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Converged,
    MaxIter,
    /// An iterate left the safety region.
    SafetyViolation,
    NonFinite,
    /// Divergence guard of the penalty baselines.
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub f_val: f64,
    pub grad_norm: f64,
    /// Norm of the quantity the stopping rule tests.
    pub stop_norm: f64,
    pub gap: f64,
    pub dist_s: Option<f64>,
    pub merit: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub metric: Metric,
    pub slope: f64,
    /// `None` when the metric is constant over the window.
    pub r_squared: Option<f64>,
    pub window: f64,
    pub points: usize,
    /// Some values were clamped at 1e-300 before taking logs.
    pub clamped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopCount {
    pub per_iter: u64,
    pub total: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeStepInfo {
    pub g_bound: f64,
    pub g_provenance: Provenance,
    pub alpha_safe: f64,
}

/// Configuration snapshot of whichever solver produced a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigSnapshot {
    Landing(crate::landing::LandingConfig),
    Baseline(crate::baselines::BaselineConfig),
}

/// End-of-run summary. Serializes to JSON and reloads to an equal value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub objective: String,
    pub config: ConfigSnapshot,
    pub instance_hash: Option<String>,
    pub seed: Option<u64>,
    pub rng_algorithm: String,
    pub exit_reason: ExitReason,
    pub iterations: usize,
    pub final_metrics: FinalMetrics,
    pub wall_ns: u64,
    pub rate: Option<RateFit>,
    pub flops: FlopCount,
    pub constants: Option<ConstantsEstimate>,
    pub safe_step: Option<SafeStepInfo>,
    #[serde(default)]
    pub diagnostics: Option<RunDiagnostics>,
}

/// Descent-inequality tally over the iterates of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentTally {
    pub checked: usize,
    pub failures: usize,
    pub min_ratio: Option<f64>,
    pub first_failure: Option<usize>,
}

/// Theory checks attached to a run when constants were computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub descent: Option<DescentTally>,
    pub rate_check: Option<RateReport>,
}

impl RunReport {
    pub(crate) fn new(algorithm: &str, objective: String, config: ConfigSnapshot) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            objective,
            config,
            instance_hash: None,
            seed: None,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            exit_reason: ExitReason::MaxIter,
            iterations: 0,
            final_metrics: FinalMetrics {
                f_val: f64::NAN,
                grad_norm: f64::NAN,
                stop_norm: f64::NAN,
                gap: f64::NAN,
                dist_s: None,
                merit: None,
            },
            wall_ns: 0,
            rate: None,
            flops: FlopCount { per_iter: 0, total: 0 },
            constants: None,
            safe_step: None,
            diagnostics: None,
        }
    }

    pub fn converged(&self) -> bool {
        self.exit_reason == ExitReason::Converged
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
