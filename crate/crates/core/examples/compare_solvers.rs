//! Landing against Riemannian gradient descent (QR and polar) and ExPen on one instance.

use landing::bench::{comparison_table, run_experiment, Algorithm, ExperimentSpec, SpectrumArg};

fn main() -> landing::Result<()> {
    let spec = ExperimentSpec {
        d: 200,
        r: 10,
        m: 400,
        spectrum: SpectrumArg::LinearHead { leading: landing::bench::balanced_leading_eigenvalue(10, 1.0, 0.5) },
        seeds: vec![1, 2],
        algorithms: vec![Algorithm::Landing, Algorithm::RgdQr, Algorithm::RgdPolar, Algorithm::Expen],
        max_iter: 100_000,
        tol: 1e-8,
        ..Default::default()
    };
    let outcome = run_experiment(&spec)?;
    print!("{}", comparison_table(&outcome));
    for (alg, seed, rep) in &outcome.reports {
        let per_iter = rep.wall_ns as f64 / (rep.iterations.max(1) as f64) / 1e3;
        println!("{alg:<10} seed {seed}: {:>8} flops/iter, {per_iter:>7.1} us/iter", rep.flops.per_iter);
    }
    Ok(())
}
