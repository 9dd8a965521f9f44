//! The safe step keeps landing iterates inside `||x^T x - I|| <= eps`, even
//! from the boundary. The bound is conservative; much larger steps eventually leave the region.

use landing::bench::{generate_pca_instance, Spectrum};
use landing::landing::{run_landing, safe_step_info, LandingConfig};
use landing::linalg::Rng;
use landing::manifold::{inflate_to_gap, random_stiefel, StiefelParams};
use landing::report::TraceRecorder;

fn main() -> landing::Result<()> {
    let (d, r, eps) = (40, 8, 0.5);
    let obj = generate_pca_instance(d, r, 60, 3, Some(&Spectrum::Geometric { leading: 1.0, ratio: 0.9 }))?.objective;
    let mut rng = Rng::new(3);
    let q = random_stiefel(&mut rng, &StiefelParams::new(d, r, eps)?)?;
    let x0 = inflate_to_gap(&mut rng, &q, 0.999 * eps)?;

    let base = LandingConfig { epsilon: eps, max_iter: 300, grad_tol: 0.0, ..Default::default() };
    let alpha_safe = safe_step_info(&obj, &base)?.alpha_safe;
    for factor in [1.0, 100.0, 300.0, 1000.0] {
        let cfg = LandingConfig { alpha: alpha_safe * factor, ..base.clone() };
        let mut rec = TraceRecorder::new();
        let rep = run_landing(&obj, &x0, &cfg, &mut rec)?;
        let worst = rec.trace().records.iter().map(|r| r.gap).fold(0.0, f64::max);
        println!(
            "alpha = {:>9.3e} ({factor:>5} x safe): max gap {worst:.4}, final gap {:.2e}, {:?}",
            cfg.alpha, rep.final_metrics.gap, rep.exit_reason
        );
    }
    Ok(())
}
