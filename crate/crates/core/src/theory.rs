//! Convergence-rate, sieve-schedule and entropy calculators, and a checker
//! for the sub-exponential tail envelope `p(x) <= tau1 exp(-tau2 |x|^tau3)`.
//!
//! The constants in these formulas are only known to exist, so every
//! calculator takes them as explicit inputs; `1` is a neutral default.

use crate::density::SieveSpec;
use crate::{Error, Result};

/// Smoothness and tail parameters of the true density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessParams {
    pub beta: f64,
    pub d: usize,
    pub tau0: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
}

impl SmoothnessParams {
    pub fn new(beta: f64, d: usize, tau0: f64, tau1: f64, tau2: f64, tau3: f64) -> Result<Self> {
        if !(beta > 0.0 && d >= 1 && tau0 >= 0.0 && tau1 > 0.0 && tau2 > 0.0 && tau3 > 0.0) {
            return Err(Error::Domain("smoothness parameters out of range".into()));
        }
        Ok(Self {
            beta,
            d,
            tau0,
            tau1,
            tau2,
            tau3,
        })
    }

    /// Standard normal in `R^d`.
    pub fn gaussian(beta: f64, d: usize) -> Self {
        Self {
            beta,
            d,
            tau0: 1.0,
            tau1: (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0),
            tau2: 0.5,
            tau3: 2.0,
        }
    }
}

/// The formulas need `log n > 0`; the theorems themselves are about large `n`.
fn check_n(n: f64) -> Result<()> {
    if n > 1.0 && n.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("sample size must exceed 1, got {n}")))
    }
}

/// `C n^(-beta/(2beta+d)) (log n)^((2 tau3 d + 2 tau3 + 2d + 1)/2)`.
pub fn rate_theorem1(n: f64, p: &SmoothnessParams, c: f64) -> Result<f64> {
    check_n(n)?;
    let d = p.d as f64;
    let log_power = (2.0 * p.tau3 * d + 2.0 * p.tau3 + 2.0 * d + 1.0) / 2.0;
    Ok(c * n.powf(-p.beta / (2.0 * p.beta + d)) * n.ln().powf(log_power))
}

/// Sieve sizes for a given sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub f_bound: f64,
    pub width: u64,
    pub m_bound: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub eps: f64,
    pub eta: f64,
}

pub fn schedule_theorem1(n: f64, p: &SmoothnessParams, c: f64) -> Result<Schedule> {
    let eps = rate_theorem1(n, p, c)?;
    let d = p.d as f64;
    let denom = 2.0 * p.beta + d;
    let ln = n.ln();
    Ok(Schedule {
        f_bound: c * ln.powf(p.tau3),
        width: (c * n.powf(d / denom) * ln.powf(p.tau3 * d + d)).floor() as u64,
        m_bound: c * n.powf((2.0 * p.beta + 2.0 * d + 3.0) / denom),
        sigma_min: n.powf(-1.0 / denom),
        sigma_max: 1.0,
        eps,
        eta: eps * eps / 48.0,
    })
}

impl TryFrom<&Schedule> for SieveSpec {
    type Error = Error;

    fn try_from(s: &Schedule) -> Result<Self> {
        let width = usize::try_from(s.width).map_err(|_| Error::Domain("sieve width overflows".into()))?;
        SieveSpec::new(s.f_bound, s.m_bound, width, s.sigma_min, s.sigma_max)
    }
}

/// `C n^(-beta/(2beta+d)) log n`; requires `beta <= 2`.
pub fn rate_theorem2(n: f64, beta: f64, d: usize, c: f64) -> Result<f64> {
    check_n(n)?;
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::Domain(format!("smoothness must lie in (0, 2], got {beta}")));
    }
    Ok(c * n.powf(-beta / (2.0 * beta + d as f64)) * n.ln())
}

/// Composite structure `h_q o ... o h_0` of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeParams {
    pub q: usize,
    /// `v_0, ..., v_{q+1}`.
    pub v: Vec<usize>,
    /// Active variables `t_0, ..., t_q`.
    pub t: Vec<usize>,
    /// Smoothness `beta_0, ..., beta_q`.
    pub betas: Vec<f64>,
    pub tau6: f64,
}

impl CompositeParams {
    pub fn new(q: usize, v: Vec<usize>, t: Vec<usize>, betas: Vec<f64>, tau6: f64) -> Result<Self> {
        if v.len() != q + 2 || t.len() != q + 1 || betas.len() != q + 1 {
            return Err(Error::Domain(format!(
                "with q = {q} expected {} dims, {} active counts and {} smoothness values",
                q + 2,
                q + 1,
                q + 1
            )));
        }
        if t.contains(&0) || betas.iter().any(|&b| !(b > 1.0)) || !(tau6 > 0.0) {
            return Err(Error::Domain("composite parameters out of range".into()));
        }
        Ok(Self { q, v, t, betas, tau6 })
    }

    /// `(i*, t*, beta*)` with `i* = argmax t_i / beta_i`, ties to the smallest index.
    pub fn critical(&self) -> (usize, usize, f64) {
        let mut best = 0;
        for i in 1..self.t.len() {
            if self.t[i] as f64 / self.betas[i] > self.t[best] as f64 / self.betas[best] {
                best = i;
            }
        }
        (best, self.t[best], self.betas[best])
    }
}

/// Exponent `b~ b* / (2 b~ b* + t* (b~ + 1))` with `b~ = min(beta, 2)`.
pub fn theorem3_exponent(beta: f64, t_star: usize, beta_star: f64) -> f64 {
    let bt = beta.min(2.0);
    bt * beta_star / (2.0 * bt * beta_star + t_star as f64 * (bt + 1.0))
}

pub fn rate_theorem3(n: f64, beta: f64, comp: &CompositeParams, c: f64) -> Result<f64> {
    check_n(n)?;
    let (_, t_star, beta_star) = comp.critical();
    Ok(c * n.powf(-theorem3_exponent(beta, t_star, beta_star)) * n.ln())
}

/// Log covering number bound `d1 (d + 2) ln(8 M^2 d1 / delta)` for width-`d1`
/// shallow networks with parameters bounded by `m`; `0` when vacuous.
pub fn covering_bound_shallow(delta: f64, d: usize, d1: u64, m: f64) -> f64 {
    let arg = 8.0 * m * m * d1 as f64 / delta;
    if arg <= 1.0 {
        0.0
    } else {
        d1 as f64 * (d as f64 + 2.0) * arg.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketBound {
    pub value: f64,
    /// `delta` is above the validity threshold `c7`.
    pub beyond_validity: bool,
}

/// Bracketing-entropy bound of the density class built on a generator class
/// with log covering numbers `covering(radius)`.
#[allow(clippy::too_many_arguments)]
pub fn bracket_bound(
    delta: f64,
    d: usize,
    f_bound: f64,
    sigma_min: f64,
    sigma_max: f64,
    covering: impl Fn(f64) -> f64,
    c5: f64,
    c6: f64,
    c7: f64,
) -> Result<BracketBound> {
    if !(delta > 0.0) {
        return Err(Error::Domain("delta must be positive".into()));
    }
    if !(sigma_min <= std::f64::consts::FRAC_1_SQRT_2 && sigma_max >= 1.0 && sigma_min > 0.0) {
        return Err(Error::Domain("need sigma_min <= 1/sqrt 2 and sigma_max >= 1".into()));
    }
    if !(f_bound >= 1.0) {
        return Err(Error::Domain("need F >= 1".into()));
    }
    let df = d as f64;
    let spread = (sigma_max / sigma_min).ln().powf(df) + f_bound.powf(2.0 * df);
    let d4 = delta.powi(4);
    let radius = c5 * d4 * sigma_min.powf(df + 2.0) / (f_bound * sigma_max.powf(2.0 * df) * spread);
    let tail = (c6 * sigma_max.powf(2.0 * df + 1.0) * spread / (d4 * sigma_min.powf(df + 1.0))).ln();
    Ok(BracketBound {
        value: covering(radius) + tail,
        beyond_validity: delta > c7,
    })
}

/// `ceil(D sigma^-d log(1/sigma)^(tau3 d + d))`.
pub fn mixture_support_bound(sigma: f64, d: usize, tau3: f64, d_const: f64) -> Result<u64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Domain(format!("need 0 < sigma < 1, got {sigma}")));
    }
    let df = d as f64;
    let v = d_const * sigma.powf(-df) * (1.0 / sigma).ln().powf(tau3 * df + df);
    // guard against 2.0000000000000004 style rounding
    Ok((v * (1.0 - 4.0 * f64::EPSILON)).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub holds: bool,
    /// Largest `p(x) / (tau1 exp(-tau2 |x|^tau3))` over the nodes.
    pub max_ratio: f64,
    pub worst_node: Vec<f64>,
}

pub fn tail2_check(density: impl Fn(&[f64]) -> f64, p: &SmoothnessParams, nodes: &[Vec<f64>]) -> TailReport {
    let mut max_ratio = f64::NEG_INFINITY;
    let mut worst = Vec::new();
    for x in nodes {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        // compare in log space so far tails do not underflow to 0/0
        let log_env = p.tau1.ln() - p.tau2 * r.powf(p.tau3);
        let ratio = (density(x).ln() - log_env).exp();
        if ratio > max_ratio {
            max_ratio = ratio;
            worst = x.clone();
        }
    }
    TailReport {
        holds: max_ratio <= 1.0 + 1e-12,
        max_ratio,
        worst_node: worst,
    }
}
