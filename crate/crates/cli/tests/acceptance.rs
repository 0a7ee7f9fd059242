//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use idens::experiment::run_experiment;
use idens::spec::{ExperimentSpec, Method, Profile};
use idens::verify::{run_suite, Report, Suite};
use implicit_density::constructor::PIPELINE_STAGES;

const SEED: u64 = 2024;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn idens(args: &[&str], cwd: &Path) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_idens"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| format!("cannot start idens: {e}"))?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "idens {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let took = start.elapsed();
    if took <= limit {
        Ok(format!("{detail}; {:.1}s", took.as_secs_f64()))
    } else {
        Err(format!("{detail}; took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))
    }
}

fn suite(s: Suite) -> Result<Report, String> {
    run_suite(s, SEED).map_err(|e| e.to_string())
}

fn summarize(r: &Report) -> Outcome {
    let worst = r
        .checks
        .iter()
        .min_by(|a, b| a.margin().total_cmp(&b.margin()))
        .expect("suites are non-empty");
    let detail = format!(
        "{}/{} checks; tightest: {} (measured {:.3e}, bound {:.3e})",
        r.checks.len() - r.failures(),
        r.checks.len(),
        worst.property,
        worst.measured,
        worst.bound
    );
    if r.passed() {
        Ok(detail)
    } else {
        let first = r.checks.iter().find(|c| !c.pass).unwrap();
        Err(format!("{detail}; first failure: {} (measured {:.3e}, bound {:.3e})", first.property, first.measured, first.bound))
    }
}

fn field<'a>(header: &str, row: &'a str, name: &str) -> &'a str {
    let i = header.split(',').position(|h| h == name).expect("column exists");
    row.split(',').nth(i).expect("row has the column")
}

/// Construct the two-atom generator with the CLI, then score it through the
/// experiment subcommand.
fn brute_force() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let truth = ExperimentSpec::profile(Profile::Desk).truth;
    let measure = dir.path().join("truth.txt");
    std::fs::write(&measure, truth.measure().unwrap().to_table()).map_err(|e| e.to_string())?;
    idens(
        &["construct", "truth.txt", "--direct", "--kappa", "1e-5", "--sigma", "1", "--out", "generator.txt", "--out-dir", "construct"],
        dir.path(),
    )?;
    std::fs::write(
        dir.path().join("spec.toml"),
        "schema_version = 1\nrepetitions = 1\nsample_sizes = [100]\nmethods = [\"brute-force\"]\n\
         [truth]\nm = [1.3, 1.3]\nnoise_sd = 1.0\n[brute_force]\ngenerator = \"generator.txt\"\n",
    )
    .map_err(|e| e.to_string())?;
    idens(&["experiment", "spec.toml", "--out-dir", "run"], dir.path())?;
    let results = std::fs::read_to_string(dir.path().join("run/results.csv")).map_err(|e| e.to_string())?;
    let mut lines = results.lines();
    let header = lines.next().ok_or("empty results")?;
    let row = lines.next().ok_or("no result row")?;
    let h2: f64 = field(header, row, "hellinger_sq").parse().map_err(|_| "unparsable hellinger_sq")?;
    let bound: f64 = field(header, row, "bound").parse().map_err(|_| "missing bound")?;
    // (2/3) kappa sum |x|^2 / (8 sigma^2) over the two atoms
    let expected = 2.0 / 3.0 * 1e-5 * 2.0 * truth.m.iter().map(|v| v * v).sum::<f64>() / 8.0;
    let detail = format!("squared Hellinger {h2:.3e} (limit 1e-4), reported bound {bound:.3e} (closed form {expected:.3e})");
    if h2 <= 1e-4 && (bound - expected).abs() <= 1e-6 * expected {
        within(Duration::from_secs(60), start, detail)
    } else {
        Err(detail)
    }
}

fn timed_suite(s: Suite, limit: Duration) -> Outcome {
    let start = Instant::now();
    let r = suite(s)?;
    let detail = summarize(&r)?;
    within(limit, start, detail)
}

fn gradients() -> Outcome {
    let r = suite(Suite::Gradients)?;
    let worst = |prefix: &str| {
        r.checks
            .iter()
            .filter(|c| c.property.starts_with(prefix))
            .map(|c| c.measured)
            .fold(0.0, f64::max)
    };
    let detail = format!(
        "worst relative error: monte-carlo {:.3e} (limit 1e-5), evidence bound {:.3e} (limit 1e-4)",
        worst("monte-carlo"),
        worst("evidence-bound")
    );
    if r.passed() {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn figure_ordering() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec::profile(Profile::Desk);
    let out = run_experiment(&spec, None).map_err(|e| e.to_string())?;
    let failed = out.cells.iter().filter(|c| c.failure.is_some()).count();
    let n = 400;
    let mc = out.median_hellinger_sq(Method::VaeMc, n);
    let kde = out.median_hellinger_sq(Method::Kde, n);
    let obj = |m| {
        let mut v: Vec<f64> = out.group(m, n).filter(|c| c.failure.is_none()).map(|c| c.final_objective).collect();
        idens::experiment::median(&mut v)
    };
    let (aevb_o, mc_o, bf_o) = (obj(Method::VaeAevb), obj(Method::VaeMc), obj(Method::BruteForce));
    let detail = format!(
        "n={n}: median squared Hellinger vae-mc {mc:.4e} vs kde {kde:.4e} (need <= 2x); \
         median final objective aevb {aevb_o:.4} <= mc {mc_o:.4} <= brute-force {bf_o:.4}; {failed} failed cells"
    );
    if failed == 0 && mc <= 2.0 * kde && aevb_o <= mc_o && mc_o <= bf_o {
        within(Duration::from_secs(30 * 60), start, detail)
    } else {
        Err(format!("{detail}; {:.1}s", start.elapsed().as_secs_f64()))
    }
}

fn kde_consistency() -> Outcome {
    let mut spec = ExperimentSpec::profile(Profile::Desk);
    spec.methods = vec![Method::Kde];
    spec.sample_sizes = vec![100, 200, 400, 800];
    let out = run_experiment(&spec, None).map_err(|e| e.to_string())?;
    let medians: Vec<f64> = spec.sample_sizes.iter().map(|&n| out.median_hellinger_sq(Method::Kde, n)).collect();
    let detail = format!(
        "median squared Hellinger over n = 100, 200, 400, 800: {}",
        medians.iter().map(|m| format!("{m:.4e}")).collect::<Vec<_>>().join(", ")
    );
    if medians.windows(2).all(|w| w[1] < w[0]) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pipeline() -> Outcome {
    let r = suite(Suite::Pipeline)?;
    let stages = r.checks.iter().filter(|c| c.property.starts_with("stage")).count();
    if stages != PIPELINE_STAGES.len() {
        return Err(format!("expected {} stages, found {stages}", PIPELINE_STAGES.len()));
    }
    summarize(&r)
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("brute-force reproduction", brute_force),
        ("generator Hellinger bound on random pairs", || timed_suite(Suite::LemmaA2, Duration::from_secs(300))),
        ("Gaussian Hellinger closed form", || summarize(&suite(Suite::GaussianHellinger)?)),
        ("convolution rate slope", || summarize(&suite(Suite::ConvolutionRate)?)),
        ("gradient correctness", gradients),
        ("step-to-ReLU L2 identity", || summarize(&suite(Suite::L2Identity)?)),
        ("simulation ordering at desk scale", figure_ordering),
        ("KDE consistency", kde_consistency),
        ("theory calculators", || summarize(&suite(Suite::Entropy)?)),
        ("pipeline bound accounting", pipeline),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
