use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::baselines::{run_expen, run_penalty, run_rgd, BaselineConfig, Retraction};
use crate::bench::fit::fit_linear_rate;
use crate::bench::instance::{generate_pca_instance, save_instance, PcaInstance, SpectrumArg};
use crate::bench::trace_csv::save_trace;
use crate::error::{invalid, Error, Result};
use crate::landing::{run_landing, safe_step_info, LandingConfig};
use crate::linalg::{DenseMatrix, Rng};
use crate::manifold::{random_stiefel, StiefelParams};
use crate::merit::{check_linear_rate, estimate_constants, ConstantsEstimate, DescentMonitor, DiagnosticsConfig};
use crate::objectives::{optimum_oracle, SolutionOracle};
use crate::report::{IterateTrace, MeritProbe, Metric, RunDiagnostics, RunReport, TraceRecorder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Landing,
    RgdQr,
    RgdPolar,
    Expen,
    Penalty,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Landing, Algorithm::RgdQr, Algorithm::RgdPolar, Algorithm::Expen, Algorithm::Penalty];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Landing => "landing",
            Algorithm::RgdQr => "rgd-qr",
            Algorithm::RgdPolar => "rgd-polar",
            Algorithm::Expen => "expen",
            Algorithm::Penalty => "penalty",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm '{s}' (expected one of landing, rgd-qr, rgd-polar, expen, penalty)")))
    }
}

/// Merit weight: the lower bound from the constants, or a fixed value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum GammaArg {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<GammaRepr> for GammaArg {
    type Error = Error;
    fn try_from(g: GammaRepr) -> Result<Self> {
        match g {
            GammaRepr::Num(v) => Ok(GammaArg::Fixed(v)),
            GammaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<GammaArg> for GammaRepr {
    fn from(g: GammaArg) -> Self {
        match g {
            GammaArg::Auto => GammaRepr::Text("auto".into()),
            GammaArg::Fixed(v) => GammaRepr::Num(v),
        }
    }
}

impl FromStr for GammaArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(GammaArg::Auto);
        }
        let v: f64 = s.parse().map_err(|_| invalid(format!("gamma must be 'auto' or a number, got '{s}'")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("gamma must be positive, got {v}")));
        }
        Ok(GammaArg::Fixed(v))
    }
}

impl GammaArg {
    pub fn value(self) -> Option<f64> {
        match self {
            GammaArg::Auto => None,
            GammaArg::Fixed(v) => Some(v),
        }
    }
}

/// A batch of PCA runs: every algorithm on one instance per seed.
///
/// Loadable from TOML; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub spectrum: SpectrumArg,
    /// Each seed fixes an instance and a starting point shared by all algorithms.
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    /// Landing step; the safe step when absent.
    pub alpha: Option<f64>,
    /// Baseline step; the landing step when absent.
    pub baseline_alpha: Option<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub gamma: GammaArg,
    pub beta: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Compute the oracle and theory constants, record merit and distance
    /// columns, and check the descent inequality along landing runs.
    pub diagnostics: bool,
    /// Reject a landing step above the safe step.
    pub safe_step: bool,
    /// Sample count for constant estimation.
    pub samples: usize,
    pub window: f64,
    pub rate_metric: Metric,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            d: 500,
            r: 20,
            m: 1000,
            spectrum: SpectrumArg::Gaussian,
            seeds: vec![42],
            algorithms: Algorithm::ALL.to_vec(),
            alpha: None,
            baseline_alpha: None,
            lambda: 1.0,
            epsilon: 0.5,
            gamma: GammaArg::Auto,
            beta: 1.0,
            max_iter: 10_000,
            tol: 1e-6,
            diagnostics: false,
            safe_step: false,
            samples: 1000,
            window: 0.5,
            rate_metric: Metric::GradNorm,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(invalid("nothing to run: the algorithm list is empty"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("nothing to run: the seed list is empty"));
        }
        StiefelParams::new(self.d, self.r, self.epsilon)?;
        if self.m == 0 {
            return Err(invalid("m must be at least 1"));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(invalid(format!("window must lie in (0, 1], got {}", self.window)));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        if self.diagnostics && self.samples == 0 {
            return Err(invalid("diagnostics need samples >= 1"));
        }
        if self.rate_metric == Metric::Merit && !self.diagnostics {
            return Err(invalid("the merit metric needs diagnostics"));
        }
        self.landing_config(0, 1.0).validate()?;
        self.baseline_config(1.0, Retraction::Qr).validate(true)
    }

    fn landing_config(&self, seed: u64, alpha: f64) -> LandingConfig {
        LandingConfig {
            alpha,
            lambda: self.lambda,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            grad_tol: self.tol,
            enforce_safe_step: self.safe_step,
            seed,
        }
    }

    fn baseline_config(&self, alpha: f64, retraction: Retraction) -> BaselineConfig {
        BaselineConfig { alpha, retraction, beta: self.beta, max_iter: self.max_iter, grad_tol: self.tol, epsilon: self.epsilon }
    }
}

/// A run that returned an error instead of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// Ordered by seed, then algorithm.
    pub reports: Vec<(Algorithm, u64, RunReport)>,
    pub failures: Vec<RunFailure>,
    pub traces: Vec<(Algorithm, u64, IterateTrace)>,
}

impl ExperimentOutcome {
    pub fn report(&self, algorithm: Algorithm, seed: u64) -> Option<&RunReport> {
        self.reports.iter().find(|(a, s, _)| *a == algorithm && *s == seed).map(|(_, _, r)| r)
    }
}

/// Everything a run on one seed shares.
struct SeedContext {
    seed: u64,
    instance: PcaInstance,
    x0: DenseMatrix,
    landing_alpha: f64,
    oracle: Option<SolutionOracle>,
    constants: Option<ConstantsEstimate>,
}

fn prepare_seed(spec: &ExperimentSpec, seed: u64) -> Result<SeedContext> {
    let spectrum = spec.spectrum.resolve(spec.d, spec.r);
    let instance = generate_pca_instance(spec.d, spec.r, spec.m, seed, spectrum.as_ref())?;
    let params = StiefelParams::new(spec.d, spec.r, spec.epsilon)?;
    let x0 = random_stiefel(&mut Rng::with_stream(seed, 1), &params)?;
    let landing_alpha = match spec.alpha {
        Some(a) => a,
        None => safe_step_info(&instance.objective, &spec.landing_config(seed, 1.0))?.alpha_safe,
    };
    let (oracle, constants) = if spec.diagnostics {
        let oracle = optimum_oracle(&instance.objective)?;
        let cfg = DiagnosticsConfig { sample_count: spec.samples, ..Default::default() };
        let consts = estimate_constants(
            &instance.objective,
            &oracle,
            spec.lambda,
            spec.epsilon,
            spec.gamma.value(),
            &cfg,
            &mut Rng::with_stream(seed, 2),
        )?;
        (Some(oracle), Some(consts))
    } else {
        (None, None)
    };
    Ok(SeedContext { seed, instance, x0, landing_alpha, oracle, constants })
}

fn run_one(spec: &ExperimentSpec, ctx: &SeedContext, alg: Algorithm) -> Result<(RunReport, IterateTrace)> {
    let obj = &ctx.instance.objective;
    let mut recorder = TraceRecorder::new();
    if let Some(o) = &ctx.oracle {
        recorder = recorder.with_oracle(o);
    }
    if let (Some(o), Some(c)) = (&ctx.oracle, &ctx.constants) {
        recorder = recorder.with_merit(MeritProbe { gamma: c.gamma, f_star: o.f_star });
    }
    let baseline_alpha = spec.baseline_alpha.unwrap_or(ctx.landing_alpha);
    let mut diagnostics = None;
    let mut report = match alg {
        Algorithm::Landing => {
            let cfg = spec.landing_config(ctx.seed, ctx.landing_alpha);
            match &ctx.constants {
                Some(c) => {
                    let mut monitor = DescentMonitor::new(obj, c.params(), DiagnosticsConfig::default().tolerance_slack);
                    let report = run_landing(obj, &ctx.x0, &cfg, &mut (&mut recorder, &mut monitor))?;
                    diagnostics = Some(RunDiagnostics { descent: Some(monitor.tally()), rate_check: None });
                    report
                }
                None => run_landing(obj, &ctx.x0, &cfg, &mut recorder)?,
            }
        }
        Algorithm::RgdQr => run_rgd(obj, &ctx.x0, &spec.baseline_config(baseline_alpha, Retraction::Qr), &mut recorder)?,
        Algorithm::RgdPolar => run_rgd(obj, &ctx.x0, &spec.baseline_config(baseline_alpha, Retraction::Polar), &mut recorder)?,
        Algorithm::Expen => run_expen(obj, &ctx.x0, &spec.baseline_config(baseline_alpha, Retraction::Qr), &mut recorder)?,
        Algorithm::Penalty => run_penalty(obj, &ctx.x0, &spec.baseline_config(baseline_alpha, Retraction::Qr), &mut recorder)?,
    };
    let trace = recorder.into_trace();
    if let Some(last) = trace.last() {
        report.final_metrics.dist_s = last.dist_s;
        report.final_metrics.merit = last.merit;
    }
    report.instance_hash = Some(ctx.instance.meta.hash.clone());
    report.seed = Some(ctx.seed);
    report.rate = fit_linear_rate(&trace, spec.rate_metric, spec.window).ok();
    if let Some(c) = &ctx.constants {
        report.constants = Some(c.clone());
        if alg == Algorithm::Landing {
            let alpha = ctx.landing_alpha;
            if alpha <= c.theorem_step_bound() {
                let rate = check_linear_rate(&trace, c, alpha, DiagnosticsConfig::default().tolerance_slack)?;
                diagnostics.get_or_insert_with(RunDiagnostics::default).rate_check = Some(rate);
            }
        }
    }
    report.diagnostics = diagnostics;
    Ok((report, trace))
}

pub const COMPARISON_HEADER: &str =
    "algorithm,seed,exit_reason,iterations,iterations_to_tol,final_f,final_grad_norm,final_gap,final_dist_s,wall_ns,wall_ns_per_iter,flops_per_iter,error";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Comparison table built from reports and failures alone.
pub fn comparison_table(outcome: &ExperimentOutcome) -> String {
    let mut rows: Vec<(u64, Algorithm, String)> = Vec::new();
    for (alg, seed, r) in &outcome.reports {
        let fm = &r.final_metrics;
        let per_iter_ns = r.wall_ns / (r.iterations as u64).max(1);
        let to_tol = if r.converged() { r.iterations.to_string() } else { String::new() };
        rows.push((
            *seed,
            *alg,
            format!(
                "{alg},{seed},{},{},{to_tol},{:?},{:?},{:?},{},{},{per_iter_ns},{},",
                serde_json::to_value(r.exit_reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                r.iterations,
                fm.f_val,
                fm.grad_norm,
                fm.gap,
                opt(fm.dist_s),
                r.wall_ns,
                r.flops.per_iter,
            ),
        ));
    }
    for f in &outcome.failures {
        let msg = f.error.replace(['"', '\n'], " ");
        rows.push((f.seed, f.algorithm, format!("{},{},error,,,,,,,,,,\"{msg}\"", f.algorithm, f.seed)));
    }
    rows.sort_by_key(|(s, a, _)| (*s, *a));
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for (_, _, line) in rows {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

struct Done {
    alg: Algorithm,
    seed: u64,
    result: std::result::Result<(RunReport, IterateTrace), String>,
}

/// Runs every (algorithm, seed) pair on up to `spec.workers` threads.
///
/// With `spec.out` set, writes `instance-seed<S>.bin`, `<alg>-seed<S>.csv`,
/// `<alg>-seed<S>.json` and `comparison.csv`; all writes happen on the
/// calling thread. A failing run is recorded and the batch continues. Seed
/// preparation errors (rank deficiency, degenerate eigengap under
/// diagnostics) fail every run of that seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    if let Some(dir) = &spec.out {
        std::fs::create_dir_all(dir)?;
    }
    let mut failures = Vec::new();
    let mut contexts = Vec::new();
    for &seed in &spec.seeds {
        match prepare_seed(spec, seed) {
            Ok(ctx) => {
                if let Some(dir) = &spec.out {
                    save_instance(&dir.join(format!("instance-seed{seed}.bin")), &ctx.instance)?;
                }
                contexts.push(ctx);
            }
            Err(e) => {
                for &alg in &spec.algorithms {
                    failures.push(RunFailure { algorithm: alg, seed, error: e.to_string() });
                }
            }
        }
    }
    let jobs: Vec<(usize, Algorithm)> = (0..contexts.len()).flat_map(|i| spec.algorithms.iter().map(move |&a| (i, a))).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Done>();
    let mut reports = Vec::new();
    let mut traces = Vec::new();
    let collect = std::thread::scope(|scope| -> Result<()> {
        for _ in 0..spec.workers.min(jobs.len()) {
            let tx = tx.clone();
            let (jobs, contexts, next) = (&jobs, &contexts, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(ci, alg)) = jobs.get(i) else { break };
                let ctx = &contexts[ci];
                let result = run_one(spec, ctx, alg).map_err(|e| e.to_string());
                if tx.send(Done { alg, seed: ctx.seed, result }).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for Done { alg, seed, result } in rx {
            match result {
                Ok((report, trace)) => {
                    if let Some(dir) = &spec.out {
                        save_trace(&dir.join(format!("{alg}-seed{seed}.csv")), &trace)?;
                        report.save(&dir.join(format!("{alg}-seed{seed}.json")))?;
                    }
                    reports.push((alg, seed, report));
                    traces.push((alg, seed, trace));
                }
                Err(error) => failures.push(RunFailure { algorithm: alg, seed, error }),
            }
        }
        Ok(())
    });
    collect?;
    reports.sort_by_key(|(a, s, _)| (*s, *a));
    traces.sort_by_key(|(a, s, _)| (*s, *a));
    failures.sort_by_key(|f| (f.seed, f.algorithm));
    let outcome = ExperimentOutcome { reports, failures, traces };
    if let Some(dir) = &spec.out {
        std::fs::write(dir.join("comparison.csv"), comparison_table(&outcome))?;
    }
    Ok(outcome)
}
