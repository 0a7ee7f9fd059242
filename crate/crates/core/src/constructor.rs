//! From mixing measures to networks.
//!
//! A discrete measure `sum_t w_t delta_{x_t}` becomes the step generator that
//! sends `(q_{t-1}, q_t]` to `x_t`, with `q_t` the cumulative weights. Each
//! step is then replaced by four ReLU units
//!
//! ```text
//! x_t * [r(q_{t-1}) - r(q_{t-1} + kappa) - r(q_t - kappa) + r(q_t)] / kappa,
//! r(a)(z) = max(0, z - a),
//! ```
//!
//! which equals `x_t` on `[q_{t-1} + kappa, q_t - kappa]`, vanishes outside
//! `[q_{t-1}, q_t]` and is linear on the two ramps in between. Both ramps lie
//! inside the interval, so the first one starts at `z = 0` and the last one
//! ends at `z = 1`.

use crate::density::GenerativeDensity;
use crate::io::{fmt_f64, CsvTable};
use crate::measures::{DiscreteMeasure, GridSpec};
use crate::metrics::{bounding_box, hellinger_quadrature, QuadratureGrid, SUPPORT_MARGIN};
use crate::networks::{ShallowGenerator, StepGenerator};
use crate::special::GAUSS_LEGENDRE_5;
use crate::{Error, Result};

/// One scaled interval indicator `value * 1_(q_lo, q_hi]` with ramp width `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSpec {
    pub value: Vec<f64>,
    pub q_lo: f64,
    pub q_hi: f64,
    pub kappa: f64,
}

impl IndicatorSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.q_lo && self.q_lo < self.q_hi && self.q_hi <= 1.0) {
            return Err(Error::Domain(format!(
                "interval ({}, {}] is not inside [0, 1]",
                self.q_lo, self.q_hi
            )));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Domain(format!("ramp width must be positive, got {}", self.kappa)));
        }
        if 2.0 * self.kappa >= self.q_hi - self.q_lo {
            return Err(Error::infeasible(
                "relu",
                format!(
                    "ramp width {} leaves no plateau on an interval of length {}",
                    self.kappa,
                    self.q_hi - self.q_lo
                ),
            ));
        }
        Ok(())
    }

    /// `(w_in, bias, output sign)` of the four hidden units.
    fn units(&self) -> [(f64, f64, f64); 4] {
        let k = self.kappa;
        let inv = 1.0 / k;
        [
            (inv, self.q_lo / k, 1.0),
            (inv, (self.q_lo + k) / k, -1.0),
            (inv, (self.q_hi - k) / k, -1.0),
            (inv, self.q_hi / k, 1.0),
        ]
    }
}

/// Step generator whose pushforward of `U[0,1]` is `m`: cut points are the
/// cumulative weights, values the atoms in measure order.
pub fn step_from_measure(m: &DiscreteMeasure) -> StepGenerator {
    let mut cuts = Vec::with_capacity(m.len() + 1);
    cuts.push(0.0);
    let mut acc = 0.0;
    for w in m.weights() {
        acc += w;
        cuts.push(acc);
    }
    // the measure is normalized, so only rounding separates `acc` from 1
    *cuts.last_mut().unwrap() = 1.0;
    StepGenerator::new(cuts, m.atoms().to_vec()).expect("a valid measure yields valid cut points")
}

/// Four-unit network for a single indicator.
pub fn relu_indicator(spec: &IndicatorSpec) -> Result<ShallowGenerator> {
    spec.validate()?;
    let d = spec.value.len();
    let units = spec.units();
    let w_in = units.iter().map(|u| u.0).collect();
    let bias = units.iter().map(|u| u.1).collect();
    let mut w_out = vec![0.0; d * 4];
    for i in 0..d {
        for (j, u) in units.iter().enumerate() {
            w_out[i * 4 + j] = u.2 * spec.value[i];
        }
    }
    ShallowGenerator::new(d, w_in, bias, w_out)
}

/// Sum of per-interval indicator networks: `4 N` hidden units for `N` intervals.
pub fn relu_from_step(s: &StepGenerator, kappa: f64) -> Result<ShallowGenerator> {
    check_kappa(s, kappa)?;
    let n = s.num_intervals();
    let d = s.dim();
    let width = 4 * n;
    let mut w_in = Vec::with_capacity(width);
    let mut bias = Vec::with_capacity(width);
    let mut w_out = vec![0.0; d * width];
    for (t, (q, x)) in s.cuts().windows(2).zip(s.values()).enumerate() {
        let spec = IndicatorSpec {
            value: x.clone(),
            q_lo: q[0],
            q_hi: q[1],
            kappa,
        };
        for (j, u) in spec.units().iter().enumerate() {
            w_in.push(u.0);
            bias.push(u.1);
            for i in 0..d {
                w_out[i * width + 4 * t + j] = u.2 * x[i];
            }
        }
    }
    ShallowGenerator::new(d, w_in, bias, w_out)
}

fn check_kappa(s: &StepGenerator, kappa: f64) -> Result<()> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("ramp width must be positive, got {kappa}")));
    }
    let shortest = s.interval_lengths().into_iter().fold(f64::INFINITY, f64::min);
    if 2.0 * kappa >= shortest {
        return Err(Error::infeasible(
            "relu",
            format!("ramp width {kappa} is too wide for the shortest interval {shortest}"),
        ));
    }
    Ok(())
}

/// Closed-form `||step - relu_from_step(step, kappa)||_2^2 = (2/3) kappa sum_t |x_t|^2`.
pub fn l2_step_gap(s: &StepGenerator, kappa: f64) -> f64 {
    let total: f64 = s.values().iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum();
    2.0 / 3.0 * kappa * total
}

/// The two-component brute-force model: values `+m` on `(0, 0.5]` and `-m` on
/// `(0.5, 1]`, realized with 8 ReLU units, and `sigma = 1`.
pub fn brute_force_two_mixture(m_vec: &[f64], kappa: f64) -> Result<GenerativeDensity> {
    if !(kappa > 0.0 && kappa < 0.25) {
        return Err(Error::Domain(format!("ramp width must lie in (0, 0.25), got {kappa}")));
    }
    let minus: Vec<f64> = m_vec.iter().map(|v| -v).collect();
    let s = StepGenerator::new(vec![0.0, 0.5, 1.0], vec![m_vec.to_vec(), minus])?;
    GenerativeDensity::new(relu_from_step(&s, kappa)?, 1.0)
}

/// Tuning of the measure-to-network pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sigma: f64,
    pub beta: f64,
    pub tau3: f64,
    /// Constant in `a_sigma = c4 * log(1/sigma)^tau3`, the half-width of the cube.
    pub c4: f64,
    /// Constant in the grid-snapping bound `d2 * sigma^beta * log(1/sigma)^(d/4)`.
    pub d2: f64,
    /// Replaces `sigma^(2 beta + 2d + 3) / 2` when set.
    pub kappa_override: Option<f64>,
    /// Quadrature points per axis for the diagnostics; `None` picks 2001 in
    /// one dimension and 401 in two.
    pub quadrature_points: Option<usize>,
    /// Skip quadrature and report only bounds.
    pub skip_measurement: bool,
}

impl PipelineConfig {
    pub fn new(sigma: f64, beta: f64, tau3: f64, c4: f64, d2: f64) -> Self {
        Self {
            sigma,
            beta,
            tau3,
            c4,
            d2,
            kappa_override: None,
            quadrature_points: None,
            skip_measurement: false,
        }
    }

    pub fn a_sigma(&self) -> f64 {
        self.c4 * (1.0 / self.sigma).ln().powf(self.tau3)
    }

    pub fn grid_spacing(&self) -> f64 {
        self.sigma.powf(2.0 * self.beta + 1.0)
    }

    pub fn small_weight(&self, d: usize) -> f64 {
        self.sigma.powf(2.0 * self.beta + 2.0 * d as f64 + 2.0)
    }

    pub fn kappa(&self, d: usize) -> f64 {
        self.kappa_override
            .unwrap_or_else(|| self.sigma.powf(2.0 * self.beta + 2.0 * d as f64 + 3.0) / 2.0)
    }
}

/// Per-stage Hellinger increment and its theoretical bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDiagnostic {
    pub stage: &'static str,
    pub atoms: usize,
    /// `NaN` when measurement was skipped.
    pub measured: f64,
    pub bound: f64,
}

impl StageDiagnostic {
    pub fn within_bound(&self, tol: f64) -> bool {
        self.measured <= self.bound + tol
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub generator: ShallowGenerator,
    pub step: StepGenerator,
    pub kappa: f64,
    pub a_sigma: f64,
    pub stages: Vec<StageDiagnostic>,
}

impl PipelineOutput {
    pub fn diagnostics_csv(&self) -> String {
        let mut t = CsvTable::new(&["stage", "atoms", "measured_hellinger", "bound"]);
        for s in &self.stages {
            t.push(vec![
                s.stage.to_string(),
                s.atoms.to_string(),
                fmt_f64(s.measured),
                fmt_f64(s.bound),
            ]);
        }
        t.render()
    }
}

pub const PIPELINE_STAGES: [&str; 5] = ["quantize", "merge", "extend", "step", "relu"];

/// Runs grid snapping, small-atom merging, partition extension, the step
/// generator and the ReLU network in that order, measuring each stage's
/// Hellinger increment `d_H(phi_sigma * before, phi_sigma * after)`.
pub fn theorem1_generator(p0_mixture: &DiscreteMeasure, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let d = p0_mixture.dim();
    let sigma = cfg.sigma;
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Domain(format!("pipeline needs 0 < sigma < 1, got {sigma}")));
    }
    let a = cfg.a_sigma();
    let spacing = cfg.grid_spacing();
    let small = cfg.small_weight(d);
    let kappa = cfg.kappa(d);
    let log_inv = (1.0 / sigma).ln();

    let grid = GridSpec::new(spacing, a, d).map_err(|e| Error::infeasible("quantize", e.to_string()))?;
    let h0 = p0_mixture
        .quantize_to_grid(&grid)
        .map_err(|e| Error::infeasible("quantize", e.to_string()))?;
    let h1 = h0.merge_small_atoms(small).map_err(|e| e.in_stage("merge"))?;
    let h2 = h1
        .extend_partition(&grid, sigma, small)
        .map_err(|e| e.in_stage("extend"))?;
    let step = step_from_measure(&h2);
    let generator = relu_from_step(&step, kappa).map_err(|e| e.in_stage("relu"))?;

    let (n0, n1, n2) = (h0.len() as f64, h1.len() as f64, h2.len() as f64);
    let root = (d as f64 / 2.0).sqrt();
    let bounds = [
        cfg.d2 * sigma.powf(cfg.beta) * log_inv.powf(d as f64 / 4.0),
        root * (n0 - n1) * a * sigma.powf(cfg.beta + d as f64),
        root * (n2 - n1) * a * sigma.powf(cfg.beta + d as f64),
        0.0,
        (d as f64 * n2 * kappa).sqrt() * a / (2.0 * 3f64.sqrt() * sigma),
    ];
    let atoms = [h0.len(), h1.len(), h2.len(), h2.len(), h2.len()];

    let measured = if cfg.skip_measurement {
        [f64::NAN; 5]
    } else {
        let points = cfg.quadrature_points.unwrap_or(if d == 1 { 2001 } else { 401 });
        let (lo, hi) = bounding_box(p0_mixture.atoms().iter().chain(h2.atoms()).map(Vec::as_slice))
            .expect("measures are non-empty");
        let pad = SUPPORT_MARGIN * sigma;
        let qgrid = QuadratureGrid::new(
            lo.iter().map(|v| v - pad).collect(),
            hi.iter().map(|v| v + pad).collect(),
            vec![points; d],
        )?;
        let step_density = GenerativeDensity::new(step.clone(), sigma)?;
        let relu_density = GenerativeDensity::new(generator.clone(), sigma)?;
        [
            hellinger_quadrature(mix(p0_mixture, sigma), mix(&h0, sigma), &qgrid)?,
            hellinger_quadrature(mix(&h0, sigma), mix(&h1, sigma), &qgrid)?,
            hellinger_quadrature(mix(&h1, sigma), mix(&h2, sigma), &qgrid)?,
            hellinger_quadrature(mix(&h2, sigma), |x: &[f64]| step_density.exact_density(x), &qgrid)?,
            hellinger_quadrature(
                |x: &[f64]| step_density.exact_density(x),
                |x: &[f64]| relu_density.exact_density(x),
                &qgrid,
            )?,
        ]
    };

    let stages = (0..5)
        .map(|i| StageDiagnostic {
            stage: PIPELINE_STAGES[i],
            atoms: atoms[i],
            measured: measured[i],
            bound: bounds[i],
        })
        .collect();
    Ok(PipelineOutput {
        generator,
        step,
        kappa,
        a_sigma: a,
        stages,
    })
}

fn mix(m: &DiscreteMeasure, sigma: f64) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| m.mixture_density(sigma, x)
}

/// `int |s - g|^2` by five-point Gauss-Legendre on every ramp of width
/// `kappa`, taking the plateaus as exact. The gap is quadratic on a ramp, so
/// the rule is exact there up to rounding.
pub fn ramp_quadrature_gap(s: &StepGenerator, g: &ShallowGenerator, kappa: f64) -> f64 {
    let mut total = 0.0;
    for (q, x) in s.cuts().windows(2).zip(s.values()) {
        for (lo, hi) in [(q[0], q[0] + kappa), (q[1] - kappa, q[1])] {
            let half = 0.5 * (hi - lo);
            let mid = lo + half;
            for (node, w) in GAUSS_LEGENDRE_5 {
                let z = mid + half * node;
                let gz = g.eval(z).expect("ramp points lie in [0, 1]");
                total += w * half * x.iter().zip(&gz).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
    }
    total
}

/// Step generator and ReLU network straight from `m`, skipping the
/// discretization stages.
pub fn direct_generator(m: &DiscreteMeasure, kappa: f64) -> Result<(StepGenerator, ShallowGenerator)> {
    let step = step_from_measure(m);
    let g = relu_from_step(&step, kappa)?;
    Ok((step, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_step(rng: &mut impl Rng, d: usize) -> StepGenerator {
        let n = rng.random_range(1..6);
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let atoms = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let m = DiscreteMeasure::new(atoms, raw.iter().map(|w| w / total).collect()).unwrap();
        step_from_measure(&m)
    }

    /// Hidden units carry `z / kappa`, so plateau values are exact only up to
    /// cancellation of that size.
    fn rounding(kappa: f64, x: &f64) -> f64 {
        64.0 * f64::EPSILON * x.abs().max(1.0) / kappa
    }

    fn numeric_gap(s: &StepGenerator, g: &ShallowGenerator, kappa: f64) -> f64 {
        for (q, x) in s.cuts().windows(2).zip(s.values()) {
            for k in 1..20 {
                let z = q[0] + kappa + (q[1] - q[0] - 2.0 * kappa) * k as f64 / 20.0;
                let gz = g.eval(z).unwrap();
                assert!(x.iter().zip(&gz).all(|(a, b)| (a - b).abs() <= rounding(kappa, a)));
            }
        }
        ramp_quadrature_gap(s, g, kappa)
    }

    #[test]
    fn step_from_measure_examples() {
        let single = step_from_measure(&DiscreteMeasure::dirac(vec![0.4, -1.0]).unwrap());
        assert_eq!(single.cuts(), &[0.0, 1.0]);
        let two = step_from_measure(&DiscreteMeasure::new(vec![vec![-1.3], vec![1.3]], vec![0.5, 0.5]).unwrap());
        assert_eq!(two.cuts(), &[0.0, 0.5, 1.0]);
        assert_eq!(two.values(), &[vec![-1.3], vec![1.3]]);
    }

    #[test]
    fn pushforward_recovers_atom_masses() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.2, 0.5, 0.3]).unwrap();
        let s = step_from_measure(&m);
        let mut rng = seeded(1);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let v = s.step_eval(rng.random())[0];
            counts[v as usize] += 1;
        }
        for (c, w) in counts.iter().zip(m.weights()) {
            let se = (w * (1.0 - w) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - w).abs() < 4.0 * se);
        }
    }

    #[test]
    fn indicator_shape() {
        let spec = IndicatorSpec {
            value: vec![2.0, -0.5],
            q_lo: 0.2,
            q_hi: 0.6,
            kappa: 0.05,
        };
        let g = relu_indicator(&spec).unwrap();
        assert_eq!(g.width(), 4);
        assert_eq!(g.eval(0.4).unwrap(), vec![2.0, -0.5]);
        assert_eq!(g.eval(0.2).unwrap(), vec![0.0, 0.0]);
        let top = g.eval(0.25).unwrap();
        assert!((top[0] - 2.0).abs() < 1e-12 && (top[1] + 0.5).abs() < 1e-12);
        assert_eq!(g.eval(0.1).unwrap(), vec![0.0, 0.0]);
        assert!(g.eval(0.8).unwrap().iter().all(|v| v.abs() < 1e-12));
        let mid_ramp = g.eval(0.225).unwrap();
        assert!((mid_ramp[0] - 1.0).abs() < 1e-12);
        let too_wide = IndicatorSpec { kappa: 0.2, ..spec };
        assert!(matches!(relu_indicator(&too_wide), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn relu_from_step_width_and_plateaus() {
        let mut rng = seeded(2);
        for _ in 0..10 {
            let s = random_step(&mut rng, 2);
            let kappa = 1e-3;
            let g = relu_from_step(&s, kappa).unwrap();
            assert_eq!(g.width(), 4 * s.num_intervals());
            assert!(g.in_class(f64::INFINITY, 1.0 / kappa));
            for _ in 0..200 {
                let z: f64 = rng.random();
                let near_ramp = s.cuts().iter().any(|c| (z - c).abs() <= kappa);
                if !near_ramp {
                    let gz = g.eval(z).unwrap();
                    assert!(gz.iter().zip(s.step_eval(z)).all(|(a, b)| (a - b).abs() <= rounding(kappa, b)));
                }
            }
        }
        let s = StepGenerator::new(vec![0.0, 0.1, 1.0], vec![vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(relu_from_step(&s, 0.05), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn l2_gap_matches_numeric_integration() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let d = rng.random_range(1..4);
            let s = random_step(&mut rng, d);
            let kappa = rng.random_range(1e-4..0.05);
            let g = relu_from_step(&s, kappa).unwrap();
            let exact = l2_step_gap(&s, kappa);
            assert!((exact - numeric_gap(&s, &g, kappa)).abs() < 1e-12);
            assert!((l2_step_gap(&s, 2.0 * kappa) - 2.0 * exact).abs() < 1e-15);
        }
        let zero = StepGenerator::new(vec![0.0, 1.0], vec![vec![0.0]]).unwrap();
        assert_eq!(l2_step_gap(&zero, 0.1), 0.0);
    }

    #[test]
    fn brute_force_model() {
        let p = brute_force_two_mixture(&[1.3, 1.3], 1e-5).unwrap();
        let g = p.shallow().unwrap();
        assert_eq!(g.width(), 8);
        assert!(g.eval(0.25).unwrap().iter().all(|v| (v - 1.3).abs() <= rounding(1e-5, v)));
        assert!((g.sup_norm() - 1.3).abs() <= rounding(1e-5, &1.3));
        let s = StepGenerator::new(vec![0.0, 0.5, 1.0], vec![vec![1.3, 1.3], vec![-1.3, -1.3]]).unwrap();
        assert!((l2_step_gap(&s, 1e-5) - 4.506_666_666_666_667e-5).abs() < 1e-17);
        assert!(brute_force_two_mixture(&[1.0], 0.3).is_err());
    }

    fn pipeline_target() -> DiscreteMeasure {
        DiscreteMeasure::new(
            vec![vec![-1.31], vec![-0.4], vec![0.52], vec![1.3], vec![1.9]],
            vec![0.3, 0.15, 0.2, 0.3495, 0.0005],
        )
        .unwrap()
    }

    #[test]
    fn pipeline_stages_respect_bounds() {
        let cfg = PipelineConfig::new(0.3, 1.0, 2.0, 2.0, 1.0);
        let out = theorem1_generator(&pipeline_target(), &cfg).unwrap();
        assert_eq!(out.stages.len(), 5);
        for s in &out.stages {
            assert!(s.within_bound(1e-6), "{s:?}");
        }
        let n2 = out.step.num_intervals();
        assert_eq!(out.generator.width(), 4 * n2);
        assert!(out.generator.in_class(out.a_sigma, 1.0 / out.kappa));
        assert_eq!(out.diagnostics_csv().lines().count(), 6);
    }

    #[test]
    fn pipeline_error_names_stage() {
        let cfg = PipelineConfig::new(0.3, 1.0, 2.0, 0.5, 1.0);
        let err = theorem1_generator(&pipeline_target(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Infeasible { ref stage, .. } if stage == "quantize"), "{err}");
    }

    #[test]
    fn end_to_end_error_shrinks_with_kappa() {
        let m = pipeline_target();
        let sigma = 0.3;
        let target = |x: &[f64]| m.mixture_density(sigma, x);
        let grid = QuadratureGrid::cube(1, -5.0, 5.0, 2001).unwrap();
        let mut last = f64::INFINITY;
        for kappa in [1e-4, 1e-5, 1e-6] {
            let (_, g) = direct_generator(&m, kappa).unwrap();
            let p = GenerativeDensity::new(g, sigma).unwrap();
            let h = hellinger_quadrature(target, |x: &[f64]| p.exact_density(x), &grid).unwrap();
            assert!(h < last);
            last = h;
        }
    }
}
