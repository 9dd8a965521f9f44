use proptest::prelude::*;

use landing::bench::instance::{read_instance, write_instance};
use landing::bench::{fit_linear_rate, generate_pca_instance, read_trace_csv, write_trace_csv, Spectrum};
use landing::landing::{landing_field, penalty_grad, run_landing, safe_step, LandingConfig};
use landing::linalg::{fro_norm, gaussian_matrix, gram, inner, matmul, polar_factor, thin_qr, Rng};
use landing::manifold::{feasibility_gap, inflate_to_gap, random_stiefel, riemannian_grad, StiefelParams};
use landing::objectives::{dist_to_solution, optimum_oracle, random_solution, ObjectiveModel};
use landing::report::{IterateRecord, IterateTrace, Metric, NullSink, RunReport, TraceRecorder};

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..12).prop_flat_map(|d| (Just(d), 1..=d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_parts_are_orthogonal((d, r) in dims(), seed in any::<u64>(), scale in 0.2f64..1.5) {
        let mut rng = Rng::new(seed);
        let a = gaussian_matrix(&mut rng, d + 3, d);
        let obj = landing::objectives::PcaObjective::from_data(&a, landing::objectives::default_weights(r)).unwrap();
        let x = gaussian_matrix(&mut rng, d, r).scale(scale);
        let rg = riemannian_grad(&obj.euclid_grad(&x).unwrap(), &x).unwrap();
        let pg = penalty_grad(&x).unwrap();
        let bound = 1e-10 * fro_norm(&rg) * fro_norm(&pg) + 1e-300;
        prop_assert!(inner(&rg, &pg).unwrap().abs() <= bound);
        let field = landing_field(&obj, &x, 1.0).unwrap();
        let nf = fro_norm(&field);
        let lhs = nf * nf - fro_norm(&rg).powi(2) - fro_norm(&pg).powi(2);
        prop_assert!(lhs.abs() <= 1e-9 * nf * nf + 1e-300);
    }

    #[test]
    fn safe_step_shrinks_as_bound_grows(g in 0.0f64..100.0, dg in 1e-6f64..10.0, lambda in 0.1f64..10.0, eps in 0.01f64..0.74) {
        let a = safe_step(g, lambda, eps).unwrap();
        let b = safe_step(g + dg, lambda, eps).unwrap();
        prop_assert!(b <= a);
        prop_assert!(a <= 1.0 / (2.0 * lambda));
        prop_assert!(b > 0.0);
    }

    #[test]
    fn landing_stays_in_region_at_safe_step((d, r) in dims(), seed in any::<u64>(), eps in 0.05f64..0.74) {
        let sp = Spectrum::Geometric { leading: 1.0, ratio: 0.8 };
        let obj = generate_pca_instance(d, r, d, seed, Some(&sp)).unwrap().objective;
        let mut cfg = LandingConfig { epsilon: eps, max_iter: 200, grad_tol: 0.0, enforce_safe_step: true, ..Default::default() };
        cfg.alpha = landing::landing::safe_step_info(&obj, &cfg).unwrap().alpha_safe;
        let mut rng = Rng::with_stream(seed, 9);
        let q = random_stiefel(&mut rng, &StiefelParams::new(d, r, eps).unwrap()).unwrap();
        let gap = eps * rng.uniform();
        let x0 = inflate_to_gap(&mut rng, &q, gap).unwrap();
        let mut rec = TraceRecorder::new();
        run_landing(&obj, &x0, &cfg, &mut rec).unwrap();
        prop_assert!(rec.trace().records.iter().all(|rec| rec.gap <= eps));
    }

    #[test]
    fn qr_and_polar_land_on_manifold((d, r) in dims(), seed in any::<u64>()) {
        let a = gaussian_matrix(&mut Rng::new(seed), d, r);
        let (q, rr) = thin_qr(&a).unwrap();
        prop_assert!(feasibility_gap(&q).unwrap() <= 1e-12);
        prop_assert!(fro_norm(&matmul(&q, &rr).unwrap().sub(&a).unwrap()) <= 1e-12 * fro_norm(&a));
        let p = polar_factor(&a).unwrap();
        prop_assert!(feasibility_gap(&p).unwrap() <= 1e-10);
        // the polar factor makes a^T p symmetric
        let s = landing::linalg::matmul_tn(&a, &p).unwrap();
        prop_assert!(s.asymmetry().unwrap() <= 1e-9 * fro_norm(&s));
    }

    #[test]
    fn distance_ignores_column_signs((d, r) in dims(), seed in any::<u64>()) {
        prop_assume!(r < d);
        let sp = Spectrum::Geometric { leading: 1.0, ratio: 0.7 };
        let obj = generate_pca_instance(d, r, d, seed, Some(&sp)).unwrap().objective;
        let oracle = optimum_oracle(&obj).unwrap();
        let x = random_solution(&oracle, &mut Rng::new(seed));
        prop_assert!(dist_to_solution(&oracle, &x).unwrap() <= 1e-12);
        prop_assert!((obj.value(&x).unwrap() - oracle.f_star).abs() <= 1e-12);
    }

    #[test]
    fn inflation_sets_exact_gap((d, r) in dims(), seed in any::<u64>(), gap in 0.0f64..0.9) {
        let mut rng = Rng::new(seed);
        let q = random_stiefel(&mut rng, &StiefelParams::new(d, r, 0.5).unwrap()).unwrap();
        let x = inflate_to_gap(&mut rng, &q, gap).unwrap();
        prop_assert!((feasibility_gap(&x).unwrap() - gap).abs() <= 1e-12);
        prop_assert!(fro_norm(&gram(&x).unwrap()) > 0.0);
    }

    #[test]
    fn rng_streams_are_reproducible(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = Rng::with_stream(seed, stream);
        let mut b = Rng::with_stream(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn trace_csv_round_trip(rows in prop::collection::vec(
        (any::<f64>(), 0.0f64..1e3, 0.0f64..1.0, prop::option::of(-1e3f64..1e3), prop::option::of(0.0f64..10.0), 0u64..1000),
        1..40,
    )) {
        let mut trace = IterateTrace::default();
        let mut wall = 0;
        for (i, (f, g, gap, merit, dist, dw)) in rows.into_iter().enumerate() {
            prop_assume!(f.is_finite());
            wall += dw;
            trace.push(IterateRecord { iter: i, f_val: f, grad_norm: g, gap, merit, dist_s: dist, wall_ns: wall }).unwrap();
        }
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &trace).unwrap();
        prop_assert_eq!(read_trace_csv(&buf[..]).unwrap(), trace);
    }

    #[test]
    fn geometric_traces_fit_exactly(ratio in 0.05f64..0.999, n in 10usize..200, c in 1e-3f64..1e3) {
        let mut trace = IterateTrace::default();
        for k in 0..n {
            trace.push(IterateRecord { iter: k, f_val: 0.0, grad_norm: c * ratio.powi(k as i32), gap: 0.0, merit: None, dist_s: None, wall_ns: 0 }).unwrap();
        }
        let fit = fit_linear_rate(&trace, Metric::GradNorm, 1.0).unwrap();
        prop_assert!((fit.slope - ratio.ln()).abs() <= 1e-9 * (1.0 + ratio.ln().abs()));
        prop_assert!(fit.r_squared.unwrap() >= 1.0 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn instance_and_report_round_trip((d, r) in dims(), seed in any::<u64>()) {
        let inst = generate_pca_instance(d, r, d + 2, seed, None).unwrap();
        let mut buf = Vec::new();
        write_instance(&mut buf, &inst).unwrap();
        let back = read_instance(&buf[..]).unwrap();
        prop_assert_eq!(&back.meta, &inst.meta);
        prop_assert_eq!(back.objective.c(), inst.objective.c());

        let x0 = random_stiefel(&mut Rng::new(seed), &StiefelParams::new(d, r, 0.5).unwrap()).unwrap();
        let cfg = LandingConfig { alpha: 1e-3, max_iter: 5, ..Default::default() };
        let rep = run_landing(&inst.objective, &x0, &cfg, &mut NullSink).unwrap();
        prop_assert_eq!(RunReport::from_json(&rep.to_json().unwrap()).unwrap(), rep);
    }
}
