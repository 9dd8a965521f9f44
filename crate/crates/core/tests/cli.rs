use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().expect("bench runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn pca(dir: &Path) -> Output {
    bench(&[
        "pca",
        "--d",
        "12",
        "--r",
        "3",
        "--m",
        "20",
        "--spectrum",
        "geometric:0.7",
        "--algos",
        "landing,rgd-polar,expen",
        "--seed",
        "3,4",
        "--max-iter",
        "3000",
        "--tol",
        "1e-8",
        "--workers",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn pca_writes_traces_reports_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = pca(dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = stdout(&out);
    assert!(table.starts_with("algorithm,seed,exit_reason,"));
    assert_eq!(table.lines().count(), 1 + 3 * 2);
    for seed in [3, 4] {
        assert!(dir.path().join(format!("instance-seed{seed}.bin")).exists());
        for alg in ["landing", "rgd-polar", "expen"] {
            assert!(dir.path().join(format!("{alg}-seed{seed}.csv")).exists());
            let rep = std::fs::read_to_string(dir.path().join(format!("{alg}-seed{seed}.json"))).unwrap();
            let rep = landing::report::RunReport::from_json(&rep).unwrap();
            assert_eq!(rep.seed, Some(seed));
        }
    }
    assert!(dir.path().join("comparison.csv").exists());
}

/// Trace bodies with the timing column removed.
fn untimed(path: &Path) -> Vec<String> {
    let t = landing::bench::load_trace(path).unwrap();
    t.records.iter().map(|r| format!("{} {:?} {:?} {:?} {:?} {:?}", r.iter, r.f_val, r.grad_norm, r.gap, r.merit, r.dist_s)).collect()
}

#[test]
fn runs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(pca(a.path()).status.success());
    assert!(pca(b.path()).status.success());
    for name in ["landing-seed3.csv", "rgd-polar-seed4.csv", "expen-seed3.csv"] {
        assert_eq!(untimed(&a.path().join(name)), untimed(&b.path().join(name)));
    }
    let ia = std::fs::read(a.path().join("instance-seed3.bin")).unwrap();
    let ib = std::fs::read(b.path().join("instance-seed3.bin")).unwrap();
    assert_eq!(ia, ib);
}

#[test]
fn rate_and_verify_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    assert!(pca(dir.path()).status.success());
    let trace = dir.path().join("landing-seed3.csv");
    let out = bench(&["rate", "--trace", trace.to_str().unwrap(), "--metric", "grad_norm", "--window", "0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("slope=-"), "{text}");

    let inst = dir.path().join("instance-seed3.bin");
    let json = dir.path().join("verify.json");
    let out = bench(&[
        "verify",
        "--instance",
        inst.to_str().unwrap(),
        "--checks",
        "prop2,lemma1,lemma2,thm1",
        "--samples",
        "50",
        "--json",
        json.to_str().unwrap(),
    ]);
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    for name in ["prop2", "lemma1", "lemma2", "thm1"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.contains("PASS")), "{text}");
    }
    assert!(json.exists());
}

#[test]
fn config_file_and_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "d = 10\nr = 2\nm = 15\nspectrum = \"geometric:0.6\"\nseeds = [1]\nalgorithms = [\"landing\"]\nmax_iter = 500\n")
        .unwrap();
    let out = bench(&["pca", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("landing-seed1.csv").exists());

    let out = bench(&["verify", "--instance", dir.path().join("missing.bin").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = bench(&["pca", "--spectrum", "triangular"]);
    assert!(!out.status.success());
}
