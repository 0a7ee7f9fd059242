use std::path::Path;
use std::process::{Command, Output};

use implicit_density::density::GenerativeDensity;
use implicit_density::measures::DiscreteMeasure;
use implicit_density::metrics::{hellinger_quadrature, QuadratureGrid};
use implicit_density::networks::ShallowGenerator;

fn idens(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idens"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY: &str = "schema_version = 1
repetitions = 2
sample_sizes = [30, 60]
methods = [\"kde\", \"vae-mc\", \"brute-force\"]
[train]
epochs = 3
mc_samples = 100
hidden = 5
";

#[test]
fn experiment_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), TINY).unwrap();
    let a = idens(&["experiment", "spec.toml", "--out-dir", "a", "--threads", "1"], dir.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = idens(&["experiment", "spec.toml", "--out-dir", "b", "--threads", "3"], dir.path());
    assert_eq!(code(&b), 0);
    for f in ["results.csv", "summary.csv", "fig2a.csv", "fig2b.csv", "traces.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let results = std::fs::read_to_string(dir.path().join("a/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 3 * 2 * 2);
    let c = idens(&["experiment", "spec.toml", "--out-dir", "c", "--seed", "7"], dir.path());
    assert_eq!(code(&c), 0);
    assert_ne!(results, std::fs::read_to_string(dir.path().join("c/results.csv")).unwrap());
}

#[test]
fn plot_files_have_mean_and_sd() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), TINY).unwrap();
    assert_eq!(code(&idens(&["experiment", "spec.toml", "--out-dir", "o"], dir.path())), 0);
    for f in ["fig2a.csv", "fig2b.csv"] {
        let text = std::fs::read_to_string(dir.path().join("o").join(f)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "method,x,mean,sd");
    }
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "schema_version = 1\nrepetitions = 0\n").unwrap();
    let o = idens(&["experiment", "bad.toml"], dir.path());
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("repetitions"), "{err}");

    std::fs::write(dir.path().join("old.toml"), "schema_version = 9\n").unwrap();
    assert_eq!(code(&idens(&["experiment", "old.toml"], dir.path())), 2);
    std::fs::write(dir.path().join("typo.toml"), "schema_version = 1\nrepetition = 3\n").unwrap();
    assert_eq!(code(&idens(&["experiment", "typo.toml"], dir.path())), 2);
    assert_eq!(code(&idens(&["experiment", "missing.toml"], dir.path())), 2);
    assert_eq!(code(&idens(&["verify", "no-such-suite"], dir.path())), 2);
}

#[test]
fn infeasible_pipeline_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.txt"), "0 1\n").unwrap();
    // spacing 0.9^1.2 exceeds the cube half-width log(1/0.9)^2
    let o = idens(&["construct", "m.txt", "--sigma", "0.9", "--beta", "0.1"], dir.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = idens(&["verify", "l2-identity", "--out-dir", "v"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("v/verify_l2-identity.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "suite,property,measured,bound,margin,pass");
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn construct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = DiscreteMeasure::new(vec![vec![-1.31], vec![-0.4], vec![0.52], vec![1.3]], vec![0.3, 0.2, 0.2, 0.3]).unwrap();
    std::fs::write(dir.path().join("m.txt"), m.to_table()).unwrap();
    let o = idens(&["construct", "m.txt", "--sigma", "0.3", "--out-dir", "c"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let diag = std::fs::read_to_string(dir.path().join("c/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 6);
    let mut total = 0.0;
    for row in diag.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let (measured, bound): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
        assert!(measured <= bound + 1e-6, "{row}");
        total += bound;
    }
    let g = ShallowGenerator::from_text(&std::fs::read_to_string(dir.path().join("c/generator.txt")).unwrap()).unwrap();
    let p = GenerativeDensity::new(g, 0.3).unwrap();
    let grid = QuadratureGrid::cube(1, -5.0, 5.0, 2001).unwrap();
    let h = hellinger_quadrature(|x| p.exact_density(x), |x| m.mixture_density(0.3, x), &grid).unwrap();
    assert!(h <= total, "{h} > {total}");
}

#[test]
fn rates_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), "schema_version = 1\nbeta = 4.0\nd = 1\ntau3 = 0.5\n").unwrap();
    let o = idens(&["rates", "p.toml", "--out-dir", "r"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r/rates.csv")).unwrap();
    let mut lines = csv.lines();
    let width = lines.next().unwrap().split(',').count();
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            assert_eq!(cols.len(), width);
            cols.iter().map(|c| c.parse().unwrap_or(f64::NAN)).collect()
        })
        .collect();
    assert_eq!(rows.len(), 5);
    for w in rows.windows(2) {
        assert!(w[1][1] < w[0][1]);
    }
    for r in &rows {
        assert_eq!(r[8], r[1] * r[1] / 48.0);
    }
}
