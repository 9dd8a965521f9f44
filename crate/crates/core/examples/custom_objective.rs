//! Landing on a user-supplied objective: the orthogonal Procrustes problem
//! `min ||x - b||^2` over `St(d, r)`, whose solution is the polar factor of `b`.

use landing::landing::{run_landing_with_point, safe_step_info, LandingConfig};
use landing::linalg::{fro_norm, gaussian_matrix, polar_factor, Rng};
use landing::manifold::{random_stiefel, StiefelParams};
use landing::objectives::FnObjective;
use landing::report::NullSink;

fn main() -> landing::Result<()> {
    let (d, r) = (30, 4);
    let mut rng = Rng::new(11);
    let b = gaussian_matrix(&mut rng, d, r).scale(0.2);
    let (bv, bg) = (b.clone(), b.clone());
    let obj = FnObjective::new(
        (d, r),
        "procrustes",
        move |x| {
            let e = fro_norm(&x.sub(&bv)?);
            Ok(e * e)
        },
        move |x| Ok(x.sub(&bg)?.scale(2.0)),
    );

    // No analytic gradient bound: the safe step comes from sampling.
    let mut cfg = LandingConfig { max_iter: 100_000, grad_tol: 1e-10, ..Default::default() };
    let info = safe_step_info(&obj, &cfg)?;
    cfg.alpha = info.alpha_safe;
    println!("G = {:.4} ({:?}), alpha = {:.4}", info.g_bound, info.g_provenance, cfg.alpha);

    let x0 = random_stiefel(&mut rng, &StiefelParams::new(d, r, cfg.epsilon)?)?;
    let (rep, x) = run_landing_with_point(&obj, &x0, &cfg, &mut NullSink)?;
    let exact = polar_factor(&b)?;
    println!("{:?} after {} iterations", rep.exit_reason, rep.iterations);
    println!("||x - polar(b)|| = {:.2e}, gap = {:.2e}", fro_norm(&x.sub(&exact)?), rep.final_metrics.gap);
    Ok(())
}
