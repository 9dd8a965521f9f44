//! Top-r PCA with the landing algorithm, checked against the eigendecomposition.

use landing::bench::{balanced_leading_eigenvalue, generate_pca_instance, Spectrum};
use landing::landing::{run_landing_with_point, safe_step_info, LandingConfig};
use landing::linalg::Rng;
use landing::manifold::{random_stiefel, StiefelParams};
use landing::objectives::{dist_to_solution, optimum_oracle, ObjectiveModel};
use landing::report::NullSink;

fn main() -> landing::Result<()> {
    let (d, r) = (100, 5);
    let lead = balanced_leading_eigenvalue(r, 1.0, 0.5);
    let inst = generate_pca_instance(d, r, 200, 1, Some(&Spectrum::linear_head(d, r, lead)))?;
    let obj = &inst.objective;

    let mut cfg = LandingConfig { max_iter: 200_000, grad_tol: 1e-10, ..Default::default() };
    cfg.alpha = safe_step_info(obj, &cfg)?.alpha_safe;
    let x0 = random_stiefel(&mut Rng::new(7), &StiefelParams::new(d, r, cfg.epsilon)?)?;

    let (report, x) = run_landing_with_point(obj, &x0, &cfg, &mut NullSink)?;
    let oracle = optimum_oracle(obj)?;
    println!("instance {}", inst.meta.hash);
    println!("alpha = {:.4}, {:?} after {} iterations", cfg.alpha, report.exit_reason, report.iterations);
    println!("f = {:.12}, f* = {:.12}", obj.value(&x)?, oracle.f_star);
    println!("dist to solution set = {:.2e}", dist_to_solution(&oracle, &x)?);
    println!("||x^T x - I|| = {:.2e}", report.final_metrics.gap);
    Ok(())
}
