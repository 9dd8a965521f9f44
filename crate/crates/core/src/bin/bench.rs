use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use landing::bench::{
    comparison_table, fit_linear_rate, load_instance, load_trace, parse_checks, run_experiment, Algorithm, ExperimentSpec, GammaArg,
    SpectrumArg, VerifySpec,
};
use landing::report::{ExitReason, Metric};

#[derive(Parser)]
#[command(name = "bench", about = "Landing algorithm benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run solvers on generated PCA instances and write traces and reports.
    Pca(PcaArgs),
    /// Check the merit inequalities on a saved instance.
    Verify(VerifyArgs),
    /// Fit a log-linear rate to one column of a trace file.
    Rate(RateArgs),
}

#[derive(Args)]
struct PcaArgs {
    /// TOML file with experiment settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// gaussian | geometric:<ratio>[:<leading>] | linear-head:<leading>
    #[arg(long)]
    spectrum: Option<SpectrumArg>,
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<Algorithm>>,
    /// Landing step; defaults to the safe step.
    #[arg(long)]
    alpha: Option<f64>,
    /// Baseline step; defaults to the landing step.
    #[arg(long)]
    baseline_alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// auto | <value>
    #[arg(long)]
    gamma: Option<GammaArg>,
    #[arg(long)]
    beta: Option<f64>,
    /// One or more seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    diagnostics: bool,
    #[arg(long)]
    safe_step: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "prop2,lemma1,lemma2,thm1")]
    checks: String,
    /// TOML file with verification settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gamma: Option<GammaArg>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value = "grad_norm")]
    metric: Metric,
    #[arg(long, default_value_t = 0.5)]
    window: f64,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

fn pca(a: PcaArgs) -> landing::Result<bool> {
    let mut spec = match &a.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    set!(spec.d, a.d);
    set!(spec.r, a.r);
    set!(spec.m, a.m);
    set!(spec.spectrum, a.spectrum);
    set!(spec.algorithms, a.algos);
    set!(spec.lambda, a.lambda);
    set!(spec.epsilon, a.epsilon);
    set!(spec.gamma, a.gamma);
    set!(spec.beta, a.beta);
    set!(spec.seeds, a.seed);
    set!(spec.max_iter, a.max_iter);
    set!(spec.tol, a.tol);
    set!(spec.workers, a.workers);
    set!(spec.samples, a.samples);
    set!(spec.rate_metric, a.metric);
    set!(spec.window, a.window);
    if a.alpha.is_some() {
        spec.alpha = a.alpha;
    }
    if a.baseline_alpha.is_some() {
        spec.baseline_alpha = a.baseline_alpha;
    }
    if a.out.is_some() {
        spec.out = a.out;
    }
    spec.diagnostics |= a.diagnostics;
    spec.safe_step |= a.safe_step;

    let outcome = run_experiment(&spec)?;
    print!("{}", comparison_table(&outcome));
    let mut ok = outcome.failures.is_empty();
    for f in &outcome.failures {
        eprintln!("{} seed {}: {}", f.algorithm, f.seed, f.error);
    }
    for (alg, seed, rep) in &outcome.reports {
        if *alg == Algorithm::Landing && matches!(rep.exit_reason, ExitReason::SafetyViolation | ExitReason::NonFinite) {
            eprintln!("landing seed {seed}: {:?}", rep.exit_reason);
            ok = false;
        }
        if let Some(d) = &rep.diagnostics {
            if let Some(t) = &d.descent {
                if t.failures > 0 {
                    eprintln!("{alg} seed {seed}: descent inequality failed at {} of {} iterates", t.failures, t.checked);
                    ok = false;
                }
            }
            if let Some(rc) = &d.rate_check {
                if !rc.passed {
                    eprintln!("{alg} seed {seed}: merit rate check failed");
                    ok = false;
                }
            }
        }
    }
    Ok(ok)
}

fn verify(a: VerifyArgs) -> landing::Result<bool> {
    let mut spec = match &a.config {
        Some(p) => toml::from_str::<VerifySpec>(&std::fs::read_to_string(p)?)?,
        None => VerifySpec::default(),
    };
    set!(spec.samples, a.samples);
    set!(spec.lambda, a.lambda);
    set!(spec.epsilon, a.epsilon);
    set!(spec.gamma, a.gamma);
    set!(spec.delta, a.delta);
    set!(spec.seed, a.seed);
    let checks = parse_checks(&a.checks)?;
    let inst = load_instance(&a.instance)?;
    let report = landing::bench::verify_objective(&inst.objective, &checks, &spec)?;
    let c = &report.constants;
    println!("instance {} (d={}, r={})", inst.meta.hash, inst.meta.d, inst.meta.r);
    println!("gamma={:e} rho={:e} mu'={:e} L'={:e} alpha_safe={:e}", c.gamma, c.rho, c.mu_prime, c.l_prime, c.alpha_safe);
    for s in &report.checks {
        let worst = s.worst_ratio.map_or_else(|| "-".to_string(), |w| format!("{w:e}"));
        println!(
            "{:<7} {} evaluated={} failed={} worst_ratio={worst}",
            s.check.name(),
            if s.passed { "PASS" } else { "FAIL" },
            s.evaluated,
            s.failed
        );
    }
    if let Some(p) = &a.json {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(report.all_passed())
}

fn rate(a: RateArgs) -> landing::Result<bool> {
    let trace = load_trace(&a.trace)?;
    let fit = fit_linear_rate(&trace, a.metric, a.window)?;
    let r2 = fit.r_squared.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
    println!(
        "metric={} window={} points={} slope={:e} factor={:.9} r_squared={r2}{}",
        fit.metric,
        fit.window,
        fit.points,
        fit.slope,
        fit.slope.exp(),
        if fit.clamped { " (clamped)" } else { "" }
    );
    Ok(fit.slope < 0.0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pca(a) => pca(a),
        Command::Verify(a) => verify(a),
        Command::Rate(a) => rate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
