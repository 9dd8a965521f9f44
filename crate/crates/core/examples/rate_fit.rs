//! Fits a linear rate to a landing trace and writes the trace as CSV.

use landing::bench::{fit_linear_rate, generate_pca_instance, write_trace_csv, Spectrum};
use landing::landing::{run_landing, safe_step_info, LandingConfig};
use landing::linalg::Rng;
use landing::manifold::{random_stiefel, StiefelParams};
use landing::objectives::optimum_oracle;
use landing::report::{Metric, TraceRecorder};

fn main() -> landing::Result<()> {
    let sp = Spectrum::Eigenvalues { values: vec![1.2, 0.6, 0.05, 0.04, 0.03, 0.02, 0.01, 0.0] };
    let obj = generate_pca_instance(8, 2, 30, 21, Some(&sp))?.objective;
    let oracle = optimum_oracle(&obj)?;
    let mut cfg = LandingConfig { max_iter: 20_000, grad_tol: 1e-10, ..Default::default() };
    cfg.alpha = safe_step_info(&obj, &cfg)?.alpha_safe;
    let x0 = random_stiefel(&mut Rng::new(1), &StiefelParams::new(8, 2, 0.5)?)?;

    let mut rec = TraceRecorder::new().with_oracle(&oracle);
    run_landing(&obj, &x0, &cfg, &mut rec)?;
    for metric in [Metric::GradNorm, Metric::DistS] {
        let fit = fit_linear_rate(rec.trace(), metric, 0.5)?;
        println!("{metric}: factor {:.6} per step, R^2 = {:?}", fit.slope.exp(), fit.r_squared);
    }
    let path = std::env::temp_dir().join("landing-rate-fit.csv");
    write_trace_csv(std::fs::File::create(&path)?, rec.trace())?;
    println!("trace written to {}", path.display());
    Ok(())
}
