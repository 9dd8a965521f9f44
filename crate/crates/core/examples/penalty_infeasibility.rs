//! Gradient descent on `f + beta p` stalls off the manifold; landing does not.

use landing::baselines::{run_penalty, BaselineConfig};
use landing::bench::{generate_pca_instance, Spectrum};
use landing::landing::{run_landing, safe_step_info, LandingConfig};
use landing::linalg::Rng;
use landing::manifold::{random_stiefel, StiefelParams};
use landing::report::NullSink;

fn main() -> landing::Result<()> {
    let sp = Spectrum::Eigenvalues { values: vec![1.2, 0.6, 0.01, 0.008, 0.006, 0.004, 0.002, 0.001] };
    let obj = generate_pca_instance(8, 2, 20, 5, Some(&sp))?.objective;
    let x0 = random_stiefel(&mut Rng::new(8), &StiefelParams::new(8, 2, 0.5)?)?;

    for beta in [1.0, 10.0, 100.0] {
        let cfg = BaselineConfig { alpha: 0.2 / (beta + 2.0), beta, max_iter: 500_000, grad_tol: 1e-10, ..Default::default() };
        let rep = run_penalty(&obj, &x0, &cfg, &mut NullSink)?;
        println!("penalty beta={beta:<5}: {:?}, gap {:.3e}", rep.exit_reason, rep.final_metrics.gap);
    }
    let mut cfg = LandingConfig { max_iter: 200_000, grad_tol: 1e-10, ..Default::default() };
    cfg.alpha = safe_step_info(&obj, &cfg)?.alpha_safe;
    let rep = run_landing(&obj, &x0, &cfg, &mut NullSink)?;
    println!("landing          : {:?}, gap {:.3e}", rep.exit_reason, rep.final_metrics.gap);
    Ok(())
}
