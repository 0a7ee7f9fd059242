//! Convergence-rate and sieve-schedule tables.

use implicit_density::io::{fmt_f64, CsvTable};
use implicit_density::theory::{rate_theorem2, rate_theorem3, schedule_theorem1, CompositeParams, SmoothnessParams};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::spec::{line_of, SCHEMA_VERSION};

pub const DEFAULT_SAMPLE_SIZES: [f64; 5] = [1e3, 1e4, 1e5, 1e6, 1e7];

#[derive(Debug, Clone, PartialEq)]
pub struct RatesSpec {
    pub smoothness: SmoothnessParams,
    pub c: f64,
    pub sample_sizes: Vec<f64>,
    pub composite: Option<CompositeParams>,
}

impl Default for RatesSpec {
    fn default() -> Self {
        Self {
            smoothness: SmoothnessParams::gaussian(2.0, 1),
            c: 1.0,
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            composite: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    schema_version: Option<u32>,
    beta: f64,
    d: usize,
    tau3: f64,
    tau0: Option<f64>,
    tau1: Option<f64>,
    tau2: Option<f64>,
    c: Option<f64>,
    sample_sizes: Option<Vec<f64>>,
    composite: Option<RawComposite>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComposite {
    q: usize,
    v: Vec<usize>,
    t: Vec<usize>,
    betas: Vec<f64>,
    tau6: Option<f64>,
}

impl RatesSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawRates = toml::from_str(text).map_err(|e| CliError::Input(format!("invalid rates parameters: {e}")))?;
        let at = |key: &str| line_of(text, key).map(|l| format!("line {l}: ")).unwrap_or_default();
        if raw.schema_version != Some(SCHEMA_VERSION) {
            return Err(CliError::Input(format!(
                "{}rates parameters must set schema_version = {SCHEMA_VERSION}",
                at("schema_version")
            )));
        }
        let smoothness = SmoothnessParams::new(
            raw.beta,
            raw.d,
            raw.tau0.unwrap_or(1.0),
            raw.tau1.unwrap_or(1.0),
            raw.tau2.unwrap_or(0.5),
            raw.tau3,
        )
        .map_err(|e| CliError::Input(format!("{}{e}", at("beta"))))?;
        let c = raw.c.unwrap_or(1.0);
        if !(c > 0.0) {
            return Err(CliError::Input(format!("{}`c` must be positive", at("c"))));
        }
        let sample_sizes = raw.sample_sizes.unwrap_or_else(|| DEFAULT_SAMPLE_SIZES.to_vec());
        if sample_sizes.is_empty() || sample_sizes.iter().any(|&n| !(n > 1.0 && n.is_finite())) {
            return Err(CliError::Input(format!(
                "{}`sample_sizes` must be non-empty and every size must exceed 1",
                at("sample_sizes")
            )));
        }
        let composite = raw
            .composite
            .map(|k| CompositeParams::new(k.q, k.v, k.t, k.betas, k.tau6.unwrap_or(1.0)))
            .transpose()
            .map_err(|e| CliError::Input(format!("{}[composite]: {e}", at("q"))))?;
        Ok(Self {
            smoothness,
            c,
            sample_sizes,
            composite,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: f64,
    pub eps: f64,
    /// Present when `beta <= 2`.
    pub eps_smooth: Option<f64>,
    pub eps_composite: Option<f64>,
    pub f_bound: f64,
    pub width: u64,
    pub m_bound: f64,
    pub sigma_min: f64,
    pub eta: f64,
}

pub fn rate_table(spec: &RatesSpec) -> Result<Vec<RateRow>> {
    let p = &spec.smoothness;
    spec.sample_sizes
        .iter()
        .map(|&n| {
            let s = schedule_theorem1(n, p, spec.c)?;
            let eps_smooth = if p.beta <= 2.0 {
                Some(rate_theorem2(n, p.beta, p.d, spec.c)?)
            } else {
                None
            };
            let eps_composite = spec
                .composite
                .as_ref()
                .map(|k| rate_theorem3(n, p.beta, k, spec.c))
                .transpose()?;
            Ok(RateRow {
                n,
                eps: s.eps,
                eps_smooth,
                eps_composite,
                f_bound: s.f_bound,
                width: s.width,
                m_bound: s.m_bound,
                sigma_min: s.sigma_min,
                eta: s.eta,
            })
        })
        .collect()
}

/// Sample size past which the rate decreases: `exp(P (2 beta + d) / beta)`
/// with `P` the log exponent.
pub fn decreasing_from(p: &SmoothnessParams) -> f64 {
    let d = p.d as f64;
    let power = (2.0 * p.tau3 * d + 2.0 * p.tau3 + 2.0 * d + 1.0) / 2.0;
    (power * (2.0 * p.beta + d) / p.beta).exp()
}

pub fn rates_csv(rows: &[RateRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut t = CsvTable::new(&["n", "eps", "eps_smooth", "eps_composite", "F", "d1", "M", "sigma_min", "eta"]);
    for r in rows {
        t.push(vec![
            fmt_f64(r.n),
            fmt_f64(r.eps),
            opt(r.eps_smooth),
            opt(r.eps_composite),
            fmt_f64(r.f_bound),
            r.width.to_string(),
            fmt_f64(r.m_bound),
            fmt_f64(r.sigma_min),
            fmt_f64(r.eta),
        ]);
    }
    t.render()
}
