//! The simulation study: every (method, sample size, repetition) cell draws
//! data from the two-component truth, fits the method and scores it by the
//! squared Hellinger distance to the truth.
//!
//! Seeds: repetition `r` uses `seed + r * SEED_STRIDE`. Its data come from
//! stream 0 of that seed (so smaller samples are prefixes of larger ones),
//! and method `k` at sample size `n` trains on stream `n * 16 + k`. Any cell
//! can therefore be rerun on its own.

use std::path::Path;
use std::time::Instant;

use implicit_density::baselines::KdeModel;
use implicit_density::constructor::{direct_generator, l2_step_gap, step_from_measure};
use implicit_density::density::GenerativeDensity;
use implicit_density::io::{fmt_f64, CsvTable};
use implicit_density::measures::DiscreteMeasure;
use implicit_density::metrics::{bounding_box, generator_box, hellinger_sq_quadrature, QuadratureGrid};
use implicit_density::networks::{l2_distance_sq, ShallowGenerator};
use implicit_density::rng::seeded_stream;
use implicit_density::training::{fit_aevb, fit_mc, GaussianEncoder};
use rayon::prelude::*;

use crate::error::{read, write, CliError, Result};
use crate::spec::{ExperimentSpec, Method};

pub const SEED_STRIDE: u64 = 1000;

pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64 * SEED_STRIDE)
}

/// Outcome of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: Method,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    /// `None` on success.
    pub failure: Option<String>,
    pub hellinger_sq: f64,
    /// Mean training log-likelihood of the reported model.
    pub objective: f64,
    /// Mean training log-likelihood after the last epoch.
    pub final_objective: f64,
    pub best_epoch: Option<usize>,
    /// Noise scale of the fitted generator, or the KDE bandwidth.
    pub scale: f64,
    /// `l2 gap / (8 sigma^2)` bound on the squared Hellinger error of the
    /// brute-force construction.
    pub bound: Option<f64>,
    pub trace: Vec<f64>,
    pub surrogate_trace: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Sorted by method, sample size, repetition.
    pub cells: Vec<CellResult>,
}

enum Fitted {
    Implicit(GenerativeDensity),
    Kde(KdeModel),
}

impl Fitted {
    fn density(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Implicit(p) => p.exact_density(x),
            Fitted::Kde(k) => k.density(x),
        }
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>, f64) {
        match self {
            Fitted::Implicit(p) => {
                let (lo, hi) = generator_box(p);
                (lo, hi, p.sigma())
            }
            Fitted::Kde(k) => {
                let (lo, hi) = bounding_box(k.points().iter().map(Vec::as_slice)).expect("KDE has points");
                (lo, hi, k.bandwidth())
            }
        }
    }
}

struct Fit {
    model: Fitted,
    best_epoch: Option<usize>,
    final_objective: Option<f64>,
    trace: Vec<f64>,
    surrogate: Vec<f64>,
    bound: Option<f64>,
}

/// Runs every cell of `spec` on a pool of `threads` workers (all cores when
/// `None`). Results do not depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentOutput> {
    spec.validate_all()?;
    let truth = spec.truth.measure()?;
    let brute = match &spec.brute_force_generator {
        Some(path) => {
            let g = ShallowGenerator::from_text(&read(path)?)?;
            if g.dim() != spec.truth.dim() {
                return Err(CliError::Input(format!(
                    "{}: generator dimension {} differs from the truth's {}",
                    path.display(),
                    g.dim(),
                    spec.truth.dim()
                )));
            }
            Some(g)
        }
        None => None,
    };
    let mut jobs = Vec::new();
    for &method in &spec.methods {
        for &n in &spec.sample_sizes {
            for rep in 0..spec.repetitions {
                jobs.push((method, n, rep));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    let mut cells: Vec<CellResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(method, n, rep)| run_cell(spec, &truth, brute.as_ref(), method, n, rep))
            .collect()
    });
    cells.sort_by_key(|c| (c.method, c.n, c.rep));
    Ok(ExperimentOutput { cells })
}

/// The data of repetition `rep` at sample size `n`.
pub fn cell_data(spec: &ExperimentSpec, truth: &DiscreteMeasure, n: usize, rep: usize) -> Vec<Vec<f64>> {
    let mut rng = seeded_stream(repetition_seed(spec.seed, rep), 0);
    truth.sample(spec.truth.noise_sd, &mut rng, n)
}

pub fn run_cell(
    spec: &ExperimentSpec,
    truth: &DiscreteMeasure,
    brute: Option<&ShallowGenerator>,
    method: Method,
    n: usize,
    rep: usize,
) -> CellResult {
    let seed = repetition_seed(spec.seed, rep);
    let start = Instant::now();
    let data = cell_data(spec, truth, n, rep);
    let outcome = fit(spec, truth, brute, method, n, seed, &data).and_then(|f| {
        let h2 = hellinger_to_truth(spec, truth, &f.model)?;
        Ok((f, h2))
    });
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((f, h2)) => {
            let objective = match &f.model {
                Fitted::Implicit(p) => p.mean_log_likelihood(&data),
                Fitted::Kde(k) => data.iter().map(|x| k.log_density(x)).sum::<f64>() / n as f64,
            };
            let scale = match &f.model {
                Fitted::Implicit(p) => p.sigma(),
                Fitted::Kde(k) => k.bandwidth(),
            };
            CellResult {
                method,
                n,
                rep,
                seed,
                failure: None,
                hellinger_sq: h2,
                objective,
                final_objective: f.final_objective.unwrap_or(objective),
                best_epoch: f.best_epoch,
                scale,
                bound: f.bound,
                trace: f.trace,
                surrogate_trace: f.surrogate,
                seconds,
            }
        }
        Err(e) => CellResult {
            method,
            n,
            rep,
            seed,
            failure: Some(e.to_string()),
            hellinger_sq: f64::NAN,
            objective: f64::NAN,
            final_objective: f64::NAN,
            best_epoch: None,
            scale: f64::NAN,
            bound: None,
            trace: Vec::new(),
            surrogate_trace: Vec::new(),
            seconds,
        },
    }
}

fn fit(
    spec: &ExperimentSpec,
    truth: &DiscreteMeasure,
    brute: Option<&ShallowGenerator>,
    method: Method,
    n: usize,
    seed: u64,
    data: &[Vec<f64>],
) -> Result<Fit> {
    let d = spec.truth.dim();
    let mut rng = seeded_stream(seed, n as u64 * 16 + method.code());
    let cfg = &spec.train.config;
    let plain = |model| Fit {
        model,
        best_epoch: None,
        final_objective: None,
        trace: Vec::new(),
        surrogate: Vec::new(),
        bound: None,
    };
    match method {
        Method::Kde => Ok(plain(Fitted::Kde(KdeModel::silverman(data.to_vec())?))),
        Method::BruteForce => {
            let sigma = spec.truth.noise_sd;
            // the step generator of the truth pushes U[0, 1] onto its atoms,
            // so its distance to `g` bounds the error of any loaded network
            let (g, gap) = match brute {
                Some(g) => {
                    let step = step_from_measure(truth);
                    (g.clone(), l2_distance_sq(&g.to_piecewise_linear(), &step.to_piecewise_linear()))
                }
                None => {
                    let (step, g) = direct_generator(truth, spec.brute_force_kappa)?;
                    (g, l2_step_gap(&step, spec.brute_force_kappa))
                }
            };
            let p = GenerativeDensity::new(g, sigma)?;
            let mut f = plain(Fitted::Implicit(p));
            f.bound = Some(gap / (8.0 * sigma * sigma));
            Ok(f)
        }
        Method::VaeMc | Method::VaeAevb => {
            let g = ShallowGenerator::random_init(d, spec.train.hidden, &mut rng);
            let init = GenerativeDensity::new(g, spec.train.sigma_init)?;
            let run = if method == Method::VaeMc {
                fit_mc(data, &init, cfg, &mut rng)?
            } else {
                let enc = GaussianEncoder::random_init(d, spec.train.encoder_hidden, &mut rng);
                fit_aevb(data, &init, &enc, cfg, &mut rng)?
            };
            Ok(Fit {
                final_objective: Some(run.final_objective()),
                best_epoch: Some(run.best_epoch),
                model: Fitted::Implicit(run.best),
                trace: run.trace,
                surrogate: run.surrogate_trace,
                bound: None,
            })
        }
    }
}

fn hellinger_to_truth(spec: &ExperimentSpec, truth: &DiscreteMeasure, model: &Fitted) -> Result<f64> {
    let (mlo, mhi, mscale) = model.support();
    let (tlo, thi) = bounding_box(truth.atoms().iter().map(Vec::as_slice)).expect("truth has atoms");
    let pad = spec.quadrature_margin * mscale.max(spec.truth.noise_sd);
    let lo = mlo.iter().zip(&tlo).map(|(a, b)| a.min(*b) - pad).collect();
    let hi = mhi.iter().zip(&thi).map(|(a, b)| a.max(*b) + pad).collect();
    let grid = QuadratureGrid::new(lo, hi, vec![spec.quadrature_points; spec.truth.dim()])?;
    let sd = spec.truth.noise_sd;
    Ok(hellinger_sq_quadrature(
        |x: &[f64]| model.density(x),
        |x: &[f64]| truth.mixture_density(sd, x),
        &grid,
    )?)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Aggregates of one (method, n) group over successful cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub method: Method,
    pub n: usize,
    pub cells: usize,
    pub failed: usize,
    /// `(mean, sd, median)`.
    pub hellinger_sq: (f64, f64, f64),
    pub objective: (f64, f64, f64),
}

impl ExperimentOutput {
    pub fn group(&self, method: Method, n: usize) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(move |c| c.method == method && c.n == n)
    }

    pub fn summaries(&self) -> Vec<GroupSummary> {
        let mut keys: Vec<(Method, usize)> = self.cells.iter().map(|c| (c.method, c.n)).collect();
        keys.dedup();
        keys.into_iter()
            .map(|(method, n)| {
                let ok: Vec<&CellResult> = self.group(method, n).filter(|c| c.failure.is_none()).collect();
                let stats = |f: fn(&CellResult) -> f64| {
                    let mut v: Vec<f64> = ok.iter().map(|c| f(c)).collect();
                    let (mean, sd) = mean_sd(&v);
                    (mean, sd, median(&mut v))
                };
                GroupSummary {
                    method,
                    n,
                    cells: self.group(method, n).count(),
                    failed: self.group(method, n).count() - ok.len(),
                    hellinger_sq: stats(|c| c.hellinger_sq),
                    objective: stats(|c| c.objective),
                }
            })
            .collect()
    }

    pub fn median_hellinger_sq(&self, method: Method, n: usize) -> f64 {
        self.summaries()
            .into_iter()
            .find(|s| s.method == method && s.n == n)
            .map_or(f64::NAN, |s| s.hellinger_sq.2)
    }

    pub fn median_objective(&self, method: Method, n: usize) -> f64 {
        self.summaries()
            .into_iter()
            .find(|s| s.method == method && s.n == n)
            .map_or(f64::NAN, |s| s.objective.2)
    }

    /// One row per cell; no wall-clock columns, so reruns are byte-identical.
    pub fn results_csv(&self) -> String {
        let mut t = CsvTable::new(&[
            "method",
            "n",
            "rep",
            "seed",
            "status",
            "hellinger_sq",
            "objective",
            "final_objective",
            "best_epoch",
            "scale",
            "bound",
        ]);
        for c in &self.cells {
            t.push(vec![
                c.method.to_string(),
                c.n.to_string(),
                c.rep.to_string(),
                c.seed.to_string(),
                match &c.failure {
                    None => "ok".into(),
                    Some(msg) => format!("failed: {}", msg.replace([',', '\n'], ";")),
                },
                fmt_f64(c.hellinger_sq),
                fmt_f64(c.objective),
                fmt_f64(c.final_objective),
                c.best_epoch.map_or(String::new(), |e| e.to_string()),
                fmt_f64(c.scale),
                c.bound.map_or(String::new(), fmt_f64),
            ]);
        }
        t.render()
    }

    pub fn summary_csv(&self) -> String {
        let mut t = CsvTable::new(&[
            "method",
            "n",
            "cells",
            "failed",
            "hellinger_sq_mean",
            "hellinger_sq_sd",
            "hellinger_sq_median",
            "objective_mean",
            "objective_sd",
            "objective_median",
        ]);
        for s in self.summaries() {
            t.push(vec![
                s.method.to_string(),
                s.n.to_string(),
                s.cells.to_string(),
                s.failed.to_string(),
                fmt_f64(s.hellinger_sq.0),
                fmt_f64(s.hellinger_sq.1),
                fmt_f64(s.hellinger_sq.2),
                fmt_f64(s.objective.0),
                fmt_f64(s.objective.1),
                fmt_f64(s.objective.2),
            ]);
        }
        t.render()
    }

    fn plot_csv(&self, pick: fn(&GroupSummary) -> (f64, f64, f64)) -> String {
        let mut t = CsvTable::new(&["method", "x", "mean", "sd"]);
        for s in self.summaries() {
            let (mean, sd, _) = pick(&s);
            t.push(vec![s.method.to_string(), s.n.to_string(), fmt_f64(mean), fmt_f64(sd)]);
        }
        t.render()
    }

    /// Squared Hellinger distance against sample size.
    pub fn fig2a_csv(&self) -> String {
        self.plot_csv(|s| s.hellinger_sq)
    }

    /// Training log-likelihood against sample size.
    pub fn fig2b_csv(&self) -> String {
        self.plot_csv(|s| s.objective)
    }

    pub fn traces_csv(&self) -> String {
        let mut t = CsvTable::new(&["method", "n", "rep", "epoch", "log_likelihood", "surrogate"]);
        for c in &self.cells {
            for (e, (ll, s)) in c.trace.iter().zip(&c.surrogate_trace).enumerate() {
                t.push(vec![
                    c.method.to_string(),
                    c.n.to_string(),
                    c.rep.to_string(),
                    e.to_string(),
                    fmt_f64(*ll),
                    fmt_f64(*s),
                ]);
            }
        }
        t.render()
    }

    pub fn timings_csv(&self) -> String {
        let mut t = CsvTable::new(&["method", "n", "rep", "seconds"]);
        for c in &self.cells {
            t.push(vec![
                c.method.to_string(),
                c.n.to_string(),
                c.rep.to_string(),
                format!("{:.3}", c.seconds),
            ]);
        }
        t.render()
    }

    /// Writes results, summary, plot data, traces and timings into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        write(&dir.join("results.csv"), &self.results_csv())?;
        write(&dir.join("summary.csv"), &self.summary_csv())?;
        write(&dir.join("fig2a.csv"), &self.fig2a_csv())?;
        write(&dir.join("fig2b.csv"), &self.fig2b_csv())?;
        write(&dir.join("traces.csv"), &self.traces_csv())?;
        write(&dir.join("timings.csv"), &self.timings_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::Profile;

    fn tiny(methods: Vec<Method>) -> ExperimentSpec {
        let mut s = ExperimentSpec::profile(Profile::Desk);
        s.methods = methods;
        s.sample_sizes = vec![40];
        s.repetitions = 2;
        s.train.config.epochs = 2;
        s.train.config.mc_samples = 200;
        s.train.hidden = 6;
        s.train.encoder_hidden = 4;
        s.quadrature_points = 101;
        s
    }

    #[test]
    fn kde_smoke() {
        let out = run_experiment(&tiny(vec![Method::Kde]), Some(1)).unwrap();
        assert_eq!(out.cells.len(), 2);
        for c in &out.cells {
            assert!(c.failure.is_none());
            assert!(c.hellinger_sq > 0.0 && c.hellinger_sq < 2.0);
        }
        assert_eq!(out.results_csv().lines().count(), 3);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let spec = tiny(vec![Method::Kde, Method::VaeMc, Method::VaeAevb]);
        let a = run_experiment(&spec, Some(1)).unwrap();
        let b = run_experiment(&spec, Some(3)).unwrap();
        assert_eq!(a.results_csv(), b.results_csv());
        assert_eq!(a.traces_csv(), b.traces_csv());
        for c in a.cells.iter().filter(|c| c.method != Method::Kde) {
            assert_eq!(c.trace.len(), 2);
        }
    }

    #[test]
    fn smaller_samples_are_prefixes() {
        let spec = tiny(vec![Method::Kde]);
        let truth = spec.truth.measure().unwrap();
        let big = cell_data(&spec, &truth, 50, 1);
        assert_eq!(cell_data(&spec, &truth, 20, 1), big[..20].to_vec());
        assert_ne!(cell_data(&spec, &truth, 20, 0), big[..20].to_vec());
    }

    #[test]
    fn brute_force_reports_its_bound() {
        let mut spec = tiny(vec![Method::BruteForce]);
        spec.repetitions = 1;
        let out = run_experiment(&spec, Some(1)).unwrap();
        let c = &out.cells[0];
        assert!((c.bound.unwrap() - 4.506_666_666_666_667e-5 / 8.0).abs() < 1e-15);
        assert!(c.hellinger_sq < 1e-4);
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
