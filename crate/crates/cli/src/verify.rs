//! Property suites. Each check records a measured value, the bound it must
//! respect and whether it did.

use std::fmt;
use std::str::FromStr;

use implicit_density::constructor::{
    l2_step_gap, ramp_quadrature_gap, relu_from_step, step_from_measure, theorem1_generator, PipelineConfig,
};
use implicit_density::density::{mc_objective_grad, GenerativeDensity};
use implicit_density::io::{fmt_f64, CsvTable};
use implicit_density::measures::DiscreteMeasure;
use implicit_density::metrics::{
    convolution_rate_check, gaussian_hellinger_sq, generator_box, hellinger_sq_quadrature, QuadratureGrid,
};
use implicit_density::networks::{l2_distance_sq, ShallowGenerator};
use implicit_density::rng::{seeded, SeededRng};
use implicit_density::theory::{
    bracket_bound, covering_bound_shallow, rate_theorem2, rate_theorem3, schedule_theorem1, tail2_check,
    CompositeParams, SmoothnessParams,
};
use implicit_density::training::{aevb_objective_at, GaussianEncoder};
use rand::Rng;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    LemmaA2,
    CorollaryA1,
    GaussianHellinger,
    L2Identity,
    Gradients,
    ConvolutionRate,
    Entropy,
    Tails,
    Pipeline,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::LemmaA2,
        Suite::CorollaryA1,
        Suite::GaussianHellinger,
        Suite::L2Identity,
        Suite::Gradients,
        Suite::ConvolutionRate,
        Suite::Entropy,
        Suite::Tails,
        Suite::Pipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LemmaA2 => "lemma-a2",
            Suite::CorollaryA1 => "corollary-a1",
            Suite::GaussianHellinger => "gaussian-hellinger",
            Suite::L2Identity => "l2-identity",
            Suite::Gradients => "gradients",
            Suite::ConvolutionRate => "convolution-rate",
            Suite::Entropy => "entropy",
            Suite::Tails => "tails",
            Suite::Pipeline => "pipeline",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
            CliError::Input(format!("unknown suite `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub property: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// `measured <= bound`.
    pub fn at_most(property: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            property: property.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }

    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn to_csv(&self) -> String {
        let mut t = CsvTable::new(&["suite", "property", "measured", "bound", "margin", "pass"]);
        for c in &self.checks {
            t.push(vec![
                self.suite.to_string(),
                c.property.clone(),
                fmt_f64(c.measured),
                fmt_f64(c.bound),
                fmt_f64(c.margin()),
                c.pass.to_string(),
            ]);
        }
        t.render()
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Report> {
    let mut rng = seeded(seed);
    let checks = match suite {
        Suite::LemmaA2 => lemma_a2(&mut rng, 100)?,
        Suite::CorollaryA1 => corollary_a1(&mut rng, 50)?,
        Suite::GaussianHellinger => gaussian_hellinger(&mut rng, 50)?,
        Suite::L2Identity => l2_identity(&mut rng, 20)?,
        Suite::Gradients => gradients(&mut rng, 20),
        Suite::ConvolutionRate => convolution_rate()?,
        Suite::Entropy => entropy()?,
        Suite::Tails => tails()?,
        Suite::Pipeline => pipeline()?,
    };
    Ok(Report { suite, checks })
}

fn random_net(rng: &mut SeededRng, d: usize) -> ShallowGenerator {
    let w = rng.random_range(1..=6);
    ShallowGenerator::new(
        d,
        (0..w).map(|_| rng.random_range(-3.0..3.0)).collect(),
        (0..w).map(|_| rng.random_range(-2.0..2.0)).collect(),
        (0..d * w).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .expect("shapes agree")
}

/// Simpson grid over the generator ranges of `ps`, padded by eight of the
/// largest noise scale.
fn grid_around(ps: &[&GenerativeDensity]) -> Result<QuadratureGrid> {
    let d = ps[0].dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut smax: f64 = 0.0;
    for p in ps {
        let (a, b) = generator_box(p);
        for i in 0..d {
            lo[i] = lo[i].min(a[i]);
            hi[i] = hi[i].max(b[i]);
        }
        smax = smax.max(p.sigma());
    }
    let pad = 8.0 * smax;
    let points = if d == 1 { 2001 } else { 401 };
    Ok(QuadratureGrid::new(
        lo.iter().map(|v| v - pad).collect(),
        hi.iter().map(|v| v + pad).collect(),
        vec![points; d],
    )?)
}

/// `d_H^2(p_f, p_g) <= |f - g|_2^2 / (8 sigma^2)` on random pairs.
pub fn lemma_a2(rng: &mut SeededRng, pairs: usize) -> Result<Vec<Check>> {
    let mut out = Vec::with_capacity(pairs);
    for k in 0..pairs {
        let d = 1 + k % 2;
        let f = random_net(rng, d);
        let g = random_net(rng, d);
        let sigma = rng.random_range(0.2..2.0);
        let pf = GenerativeDensity::new(f.clone(), sigma)?;
        let pg = GenerativeDensity::new(g.clone(), sigma)?;
        let grid = grid_around(&[&pf, &pg])?;
        let h2 = hellinger_sq_quadrature(|x| pf.exact_density(x), |x| pg.exact_density(x), &grid)?;
        let bound = l2_distance_sq(&f.to_piecewise_linear(), &g.to_piecewise_linear()) / (8.0 * sigma * sigma);
        out.push(Check::at_most(
            format!("pair {k} (d={d}, sigma={sigma:.3}): squared Hellinger <= L2/(8 sigma^2) + 1e-6"),
            h2,
            bound + 1e-6,
        ));
    }
    Ok(out)
}

/// Merging small atoms moves mass `w` by `|x' - x|`; the squared Hellinger
/// change is at most `sum w |x' - x|^2 / (8 sigma^2)`.
pub fn corollary_a1(rng: &mut SeededRng, cases: usize) -> Result<Vec<Check>> {
    let mut out = Vec::with_capacity(cases);
    for k in 0..cases {
        let d = 1 + k % 2;
        let n = rng.random_range(2..8);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let atoms = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let m = DiscreteMeasure::new(atoms, raw.iter().map(|w| w / total).collect())?;
        let max_w = m.weights().iter().copied().fold(0.0, f64::max);
        let threshold = rng.random_range(0.0..max_w);
        let sigma = rng.random_range(0.2..2.0);
        let (merged, cost) = m.merge_small_atoms_traced(threshold)?;
        let pad = 8.0 * sigma;
        let points = if d == 1 { 2001 } else { 401 };
        let grid = QuadratureGrid::cube(d, -2.0 - pad, 2.0 + pad, points)?;
        let h2 = hellinger_sq_quadrature(
            |x| m.mixture_density(sigma, x),
            |x| merged.mixture_density(sigma, x),
            &grid,
        )?;
        out.push(Check::at_most(
            format!("measure {k} (d={d}, {} atoms merged): squared Hellinger <= transport/(8 sigma^2) + 1e-6", m.len() - merged.len()),
            h2,
            cost / (8.0 * sigma * sigma) + 1e-6,
        ));
    }
    Ok(out)
}

fn random_spd(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut s = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            s[i * d + j] = (0..d).map(|k| a[i * d + k] * a[j * d + k]).sum::<f64>() + if i == j { 0.2 } else { 0.0 };
        }
    }
    s
}

fn gaussian_pdf(mu: &[f64], cov: &[f64]) -> impl Fn(&[f64]) -> f64 {
    let d = mu.len();
    let (det, inv) = if d == 1 {
        (cov[0], vec![1.0 / cov[0]])
    } else {
        let det = cov[0] * cov[3] - cov[1] * cov[2];
        (det, vec![cov[3] / det, -cov[1] / det, -cov[2] / det, cov[0] / det])
    };
    let mu = mu.to_vec();
    let norm = ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt();
    move |x: &[f64]| {
        let r: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += r[i] * inv[i * d + j] * r[j];
            }
        }
        (-0.5 * q).exp() / norm
    }
}

/// Closed form against quadrature on random SPD pairs.
pub fn gaussian_hellinger(rng: &mut SeededRng, pairs: usize) -> Result<Vec<Check>> {
    let mut out = Vec::with_capacity(pairs);
    for k in 0..pairs {
        let d = 1 + k % 2;
        let mu1: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mu2: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c1 = random_spd(rng, d);
        let c2 = random_spd(rng, d);
        let closed = gaussian_hellinger_sq(&mu1, &c1, &mu2, &c2)?;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for i in 0..d {
            let (s1, s2) = (c1[i * d + i].sqrt(), c2[i * d + i].sqrt());
            lo[i] = (mu1[i] - 10.0 * s1).min(mu2[i] - 10.0 * s2);
            hi[i] = (mu1[i] + 10.0 * s1).max(mu2[i] + 10.0 * s2);
        }
        let grid = QuadratureGrid::new(lo, hi, vec![401; d])?;
        let quad = hellinger_sq_quadrature(gaussian_pdf(&mu1, &c1), gaussian_pdf(&mu2, &c2), &grid)?;
        out.push(Check::at_most(
            format!("pair {k} (d={d}): |closed form - quadrature|"),
            (closed - quad).abs(),
            1e-6,
        ));
    }
    Ok(out)
}

/// Closed-form step-to-ReLU gap against quadrature on the ramps.
pub fn l2_identity(rng: &mut SeededRng, cases: usize) -> Result<Vec<Check>> {
    let mut out = Vec::with_capacity(cases);
    for k in 0..cases {
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=6);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let atoms = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let m = DiscreteMeasure::new(atoms, raw.iter().map(|w| w / total).collect())?;
        let step = step_from_measure(&m);
        let shortest = step.interval_lengths().into_iter().fold(f64::INFINITY, f64::min);
        let kappa = rng.random_range(1e-5..0.45 * shortest);
        let g = relu_from_step(&step, kappa)?;
        let exact = l2_step_gap(&step, kappa);
        let numeric = ramp_quadrature_gap(&step, &g, kappa);
        out.push(Check::at_most(
            format!("step {k} (d={d}, {n} intervals, kappa={kappa:.2e}): |identity - quadrature|"),
            (exact - numeric).abs(),
            1e-12,
        ));
    }
    Ok(out)
}

/// Relative l2 error of `grad` against central differences of `f` at `x`.
pub fn fd_relative_error(f: impl Fn(&[f64]) -> f64, x: &[f64], grad: &[f64], h: f64) -> f64 {
    let mut p = x.to_vec();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..x.len() {
        p[k] = x[k] + h;
        let up = f(&p);
        p[k] = x[k] - h;
        let dn = f(&p);
        p[k] = x[k];
        let fd = (up - dn) / (2.0 * h);
        num += (fd - grad[k]).powi(2);
        den += fd * fd;
    }
    num.sqrt() / den.sqrt().max(1e-12)
}

/// Monte-Carlo likelihood and evidence-bound gradients against central
/// differences with step `1e-6`.
pub fn gradients(rng: &mut SeededRng, cases: usize) -> Vec<Check> {
    let mut out = Vec::with_capacity(2 * cases);
    for k in 0..cases {
        let d = 1 + k % 2;
        let g = ShallowGenerator::random_init(d, rng.random_range(2..=8), rng);
        let sigma = rng.random_range(0.3..1.5);
        let data: Vec<Vec<f64>> = (0..6).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        // keep draws away from kinks so differences do not straddle one
        let mut latents = Vec::new();
        while latents.len() < 64 {
            let z: f64 = rng.random();
            if g.w_in().iter().zip(g.bias()).all(|(w, b)| (w * z - b).abs() > 1e-4) {
                latents.push(z);
            }
        }
        let an = mc_objective_grad(&g, sigma, &data, &latents);
        let mut x = g.params();
        x.push(sigma);
        let mut grad = an.generator.clone();
        grad.push(an.sigma);
        let ng = g.num_params();
        let f = |p: &[f64]| {
            let mut g2 = g.clone();
            g2.set_params(&p[..ng]);
            mc_objective_grad(&g2, p[ng], &data, &latents).value
        };
        out.push(Check::at_most(
            format!("monte-carlo instance {k} (d={d}): relative l2 error"),
            fd_relative_error(f, &x, &grad, 1e-6),
            1e-5,
        ));
    }
    for k in 0..cases {
        let d = 1 + k % 2;
        let g = ShallowGenerator::random_init(d, rng.random_range(2..=8), rng);
        let enc = GaussianEncoder::random_init(d, rng.random_range(2..=8), rng);
        let sigma = rng.random_range(0.3..1.5);
        let xv: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eps: f64 = rng.random_range(-2.0..2.0);
        let an = aevb_objective_at(&g, sigma, &enc, &xv, eps);
        let (ng, ne) = (g.num_params(), enc.num_params());
        let mut x = g.params();
        x.push(sigma);
        x.extend(enc.params());
        let mut grad = an.generator.clone();
        grad.push(an.sigma);
        grad.extend(&an.encoder);
        let f = |p: &[f64]| {
            let mut g2 = g.clone();
            g2.set_params(&p[..ng]);
            let mut e2 = enc.clone();
            e2.set_params(&p[ng + 1..ng + 1 + ne]);
            aevb_objective_at(&g2, p[ng], &e2, &xv, eps).value
        };
        out.push(Check::at_most(
            format!("evidence-bound instance {k} (d={d}): relative l2 error"),
            fd_relative_error(f, &x, &grad, 1e-6),
            1e-4,
        ));
    }
    out
}

pub const CONVOLUTION_SIGMAS: [f64; 7] = [0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2];

/// `d_H(N(0, I), N(0, (1 + sigma^2) I))` against `sigma`: log-log slope 2.
pub fn convolution_rate() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for d in 1..=3 {
        let (slope, dists) = convolution_rate_check(&CONVOLUTION_SIGMAS, d)?;
        out.push(Check::at_most(format!("d={d}: |slope - 2|"), (slope - 2.0).abs(), 0.05));
        let increasing = dists.windows(2).all(|w| w[0] < w[1]);
        out.push(Check {
            property: format!("d={d}: distance increases with sigma"),
            measured: f64::from(u8::from(increasing)),
            bound: 1.0,
            pass: increasing,
        });
    }
    Ok(out)
}

pub const ENTROPY_SAMPLE_SIZES: [f64; 4] = [1e3, 1e4, 1e5, 1e6];

/// Bracketing bound over `n epsilon_n^2` along the sieve schedule, for each
/// sample size in [`ENTROPY_SAMPLE_SIZES`].
pub fn bracket_ratios(params: &SmoothnessParams, c: f64) -> Result<Vec<f64>> {
    ENTROPY_SAMPLE_SIZES
        .iter()
        .map(|&n| {
            let s = schedule_theorem1(n, params, c)?;
            let b = bracket_bound(
                s.eps,
                params.d,
                s.f_bound,
                s.sigma_min,
                s.sigma_max,
                |r| covering_bound_shallow(r, params.d, s.width, s.m_bound),
                1.0,
                1.0,
                1.0,
            )?;
            Ok(b.value / (n * s.eps * s.eps))
        })
        .collect()
}

pub fn entropy() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (beta, d) in [(0.5, 1), (1.0, 1), (1.0, 2), (2.0, 2), (1.5, 3)] {
        for n in [1e3, 1e5, 1e7] {
            let comp = CompositeParams::new(0, vec![d, d], vec![d], vec![beta + 1.0], 1.0)?;
            let t3 = rate_theorem3(n, beta, &comp, 1.0)?;
            let t2 = rate_theorem2(n, beta, d, 1.0)?;
            out.push(Check::at_most(
                format!("beta={beta}, d={d}, n={n:e}: relative gap between the composite rate at q=0 and the smooth rate"),
                ((t3 - t2) / t2).abs(),
                1e-12,
            ));
        }
    }
    for (beta, d, tau3) in [(1.0, 1, 2.0), (1.0, 2, 2.0), (2.0, 1, 1.0)] {
        let p = SmoothnessParams::new(beta, d, 1.0, 1.0, 0.5, tau3)?;
        let ratios = bracket_ratios(&p, 1.0)?;
        let growth = ratios.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        out.push(Check::at_most(
            format!(
                "beta={beta}, d={d}, tau3={tau3}: largest step-to-step growth of bracketing bound / (n eps^2) over n = 1e3..1e6 (ratios {})",
                ratios.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(" ")
            ),
            growth,
            1.0,
        ));
    }
    out.push(Check::at_most(
        "covering bound vanishes at 8 M^2 d1 = delta",
        covering_bound_shallow(8.0, 1, 1, 1.0),
        0.0,
    ));
    Ok(out)
}

/// The normal and Laplace envelopes.
pub fn tails() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for d in 1..=2 {
        let nodes = QuadratureGrid::cube(d, -6.0, 6.0, if d == 1 { 241 } else { 61 })?.nodes();
        let normal = SmoothnessParams::gaussian(2.0, d);
        let phi = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            (2.0 * std::f64::consts::PI).powf(-(x.len() as f64) / 2.0) * (-0.5 * r2).exp()
        };
        let rep = tail2_check(phi, &normal, &nodes);
        out.push(Check::at_most(format!("normal, d={d}: max density / envelope"), rep.max_ratio, 1.0 + 1e-12));

        let laplace = SmoothnessParams::new(1.0, d, 1.0, 0.5f64.powi(d as i32), 1.0, 1.0)?;
        let lap = |x: &[f64]| 0.5f64.powi(x.len() as i32) * (-x.iter().map(|v| v.abs()).sum::<f64>()).exp();
        let rep = tail2_check(lap, &laplace, &nodes);
        out.push(Check::at_most(format!("laplace, d={d}: max density / envelope"), rep.max_ratio, 1.0 + 1e-12));

        let halved = SmoothnessParams {
            tau1: normal.tau1 / 2.0,
            ..normal
        };
        let rep = tail2_check(phi, &halved, &nodes);
        out.push(Check {
            property: format!("normal with halved tau1, d={d}: envelope is violated with ratio 2"),
            measured: rep.max_ratio,
            bound: 2.0,
            pass: !rep.holds && (rep.max_ratio - 2.0).abs() < 1e-12,
        });
    }
    Ok(out)
}

/// The five-atom target used for the pipeline accounting.
pub fn pipeline_target() -> DiscreteMeasure {
    DiscreteMeasure::new(
        vec![vec![-1.31], vec![-0.4], vec![0.52], vec![1.3], vec![1.9]],
        vec![0.3, 0.15, 0.2, 0.3495, 0.0005],
    )
    .expect("valid measure")
}

pub fn pipeline_config() -> PipelineConfig {
    PipelineConfig::new(0.3, 1.0, 2.0, 2.0, 1.0)
}

pub fn pipeline() -> Result<Vec<Check>> {
    let out = theorem1_generator(&pipeline_target(), &pipeline_config())?;
    let mut checks: Vec<Check> = out
        .stages
        .iter()
        .map(|s| {
            Check::at_most(
                format!("stage {} ({} atoms): Hellinger increment <= bound + 1e-6", s.stage, s.atoms),
                s.measured,
                s.bound + 1e-6,
            )
        })
        .collect();
    let in_sieve = out.generator.in_class(out.a_sigma, 1.0 / out.kappa);
    checks.push(Check {
        property: format!("generator in the sieve with F = a_sigma = {:.4}, M = 1/kappa", out.a_sigma),
        measured: out.generator.max_param_magnitude() * out.kappa,
        bound: 1.0,
        pass: in_sieve,
    });
    Ok(checks)
}
