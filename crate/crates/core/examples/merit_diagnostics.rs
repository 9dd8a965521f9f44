//! Estimates the merit-function constants of a small instance and checks the
//! descent, gradient-domination, quadratic-growth and linear-rate inequalities.

use landing::bench::{generate_pca_instance, verify_objective, Check, Spectrum, VerifySpec};

fn main() -> landing::Result<()> {
    let sp = Spectrum::Eigenvalues { values: vec![1.2, 0.6, 0.01, 0.008, 0.006, 0.004, 0.002, 0.001] };
    let inst = generate_pca_instance(8, 2, 20, 5, Some(&sp))?;
    let spec = VerifySpec { samples: 500, ..Default::default() };
    let report = verify_objective(&inst.objective, &Check::ALL, &spec)?;

    let c = &report.constants;
    println!("gamma = {:.4} (lower bound {:.4}), rho = {:.4e}", c.gamma, c.gamma_lo, c.rho);
    println!("mu = {:.4e}, mu' = {:.4e}, L' = {:.4e}", c.mu, c.mu_prime, c.l_prime);
    println!("alpha_safe = {:.4e}, step bound = {:.4e}", c.alpha_safe, c.theorem_step_bound());
    for (name, p) in &c.provenance {
        println!("  {name}: {p:?}");
    }
    for s in &report.checks {
        println!("{:<22?} {}/{} passed, worst ratio {:?}", s.check, s.evaluated - s.failed, s.evaluated, s.worst_ratio);
    }
    Ok(())
}
