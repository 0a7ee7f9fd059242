use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use idens::construct::{run_construct, ConstructArgs};
use idens::error::{CliError, Result};
use idens::experiment::run_experiment;
use idens::rates::{decreasing_from, rate_table, rates_csv, RatesSpec};
use idens::spec::{ExperimentSpec, Profile};
use idens::verify::{run_suite, Suite};

const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(name = "idens", version, about = "Implicit generative density experiments")]
struct Cli {
    /// Base seed; overrides the spec's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// `desk` or `full`.
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the simulation study described by a TOML spec (profile defaults when omitted).
    Experiment { spec: Option<PathBuf> },
    /// Run one property suite, or `all`.
    Verify { suite: String },
    /// Build a generator from a discrete measure.
    Construct(ConstructCmd),
    /// Tabulate rates and sieve sizes from a TOML parameter file.
    Rates { params: Option<PathBuf> },
}

#[derive(Debug, Args)]
struct ConstructCmd {
    /// Table of atoms: coordinates then weight, one atom per row.
    measure: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 2.0)]
    tau3: f64,
    #[arg(long, default_value_t = 1.0)]
    c4: f64,
    #[arg(long, default_value_t = 1.0)]
    d2: f64,
    #[arg(long)]
    kappa: Option<f64>,
    /// Skip the discretization stages.
    #[arg(long)]
    direct: bool,
    /// Generator output (default: <out-dir>/generator.txt).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &std::path::Path, text: &str) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(path)).map_err(|e| CliError::io(path, e))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Experiment { spec } => {
            let mut s = match spec {
                Some(p) => ExperimentSpec::from_toml(&read(&p)?, cli.profile)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
                None => ExperimentSpec::profile(cli.profile),
            };
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            let out = run_experiment(&s, cli.threads)?;
            out.write_all(&cli.out_dir)?;
            for g in out.summaries() {
                println!(
                    "{:<12} n={:<6} median squared Hellinger {:.4e} ({} failed)",
                    g.method.name(),
                    g.n,
                    g.hellinger_sq.2,
                    g.failed
                );
            }
            Ok(())
        }
        Command::Verify { suite } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse()?]
            };
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let mut failed = Vec::new();
            for s in suites {
                let r = run_suite(s, seed)?;
                write(&cli.out_dir.join(format!("verify_{s}.csv")), &r.to_csv())?;
                println!("{s}: {}/{} checks passed", r.checks.len() - r.failures(), r.checks.len());
                for c in r.checks.iter().filter(|c| !c.pass) {
                    println!("  FAIL {}: measured {:e}, bound {:e}", c.property, c.measured, c.bound);
                }
                if !r.passed() {
                    failed.push(s.to_string());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Property(format!("suites failed: {}", failed.join(", "))))
            }
        }
        Command::Construct(c) => {
            let args = ConstructArgs {
                measure: c.measure,
                sigma: c.sigma,
                beta: c.beta,
                tau3: c.tau3,
                c4: c.c4,
                d2: c.d2,
                kappa: c.kappa,
                direct: c.direct,
                out: c.out.unwrap_or_else(|| cli.out_dir.join("generator.txt")),
                diagnostics: cli.out_dir.join("diagnostics.csv"),
            };
            let out = run_construct(&args)?;
            print!("{}", out.diagnostics_csv());
            Ok(())
        }
        Command::Rates { params } => {
            let spec = match params {
                Some(p) => RatesSpec::from_toml(&read(&p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
                None => RatesSpec::default(),
            };
            let rows = rate_table(&spec)?;
            let csv = rates_csv(&rows);
            write(&cli.out_dir.join("rates.csv"), &csv)?;
            print!("{csv}");
            let from = decreasing_from(&spec.smoothness);
            if spec.sample_sizes.iter().any(|&n| n < from) {
                eprintln!("note: the rate only decreases for n > {from:.3e}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
