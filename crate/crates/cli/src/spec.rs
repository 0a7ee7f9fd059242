//! Experiment specifications: a versioned TOML file layered over a profile.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! repetitions = 10
//! sample_sizes = [100, 200, 400]
//! methods = ["kde", "vae-mc", "vae-aevb", "brute-force"]
//!
//! [truth]
//! m = [1.3, 1.3]
//! weights = [0.5, 0.5]
//!
//! [train]
//! epochs = 1000
//! mc_samples = 10000
//! ```
//!
//! Every key is optional; missing keys take the profile's value.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use implicit_density::measures::DiscreteMeasure;
use implicit_density::training::TrainConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Desk,
    Full,
}

impl FromStr for Profile {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err(CliError::Input(format!("unknown profile `{s}`; expected desk or full"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kde,
    VaeMc,
    VaeAevb,
    BruteForce,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Kde, Method::VaeMc, Method::VaeAevb, Method::BruteForce];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kde => "kde",
            Method::VaeMc => "vae-mc",
            Method::VaeAevb => "vae-aevb",
            Method::BruteForce => "brute-force",
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `p0 = w1 phi_s(x - m) + w2 phi_s(x + m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthSpec {
    pub m: Vec<f64>,
    pub weights: [f64; 2],
    pub noise_sd: f64,
}

impl TruthSpec {
    pub fn measure(&self) -> Result<DiscreteMeasure> {
        let minus = self.m.iter().map(|v| -v).collect();
        Ok(DiscreteMeasure::new(vec![self.m.clone(), minus], self.weights.to_vec())?)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub config: TrainConfig,
    /// Hidden units of the generator.
    pub hidden: usize,
    /// Hidden units of each encoder head.
    pub encoder_hidden: usize,
    pub sigma_init: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub repetitions: usize,
    pub sample_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub truth: TruthSpec,
    pub train: TrainSpec,
    pub brute_force_kappa: f64,
    /// Use this serialized generator for the brute-force method instead of
    /// building one.
    pub brute_force_generator: Option<PathBuf>,
    /// Simpson points per axis for the Hellinger quadrature.
    pub quadrature_points: usize,
    /// Padding, in noise scales, around the supports.
    pub quadrature_margin: f64,
}

impl ExperimentSpec {
    pub fn profile(profile: Profile) -> Self {
        let (reps, sizes, m) = match profile {
            Profile::Desk => (10, vec![100, 200, 400], 10_000),
            Profile::Full => (50, vec![100, 200, 400, 800], 100_000),
        };
        Self {
            seed: 2024,
            repetitions: reps,
            sample_sizes: sizes,
            methods: Method::ALL.to_vec(),
            truth: TruthSpec {
                m: vec![1.3, 1.3],
                weights: [0.5, 0.5],
                noise_sd: 1.0,
            },
            train: TrainSpec {
                config: TrainConfig {
                    mc_samples: m,
                    ..TrainConfig::default()
                },
                hidden: 50,
                encoder_hidden: 50,
                sigma_init: 1.0,
            },
            brute_force_kappa: 1e-5,
            brute_force_generator: None,
            quadrature_points: 401,
            quadrature_margin: 8.0,
        }
    }

    /// Parses `text` over the defaults of `profile`.
    pub fn from_toml(text: &str, profile: Profile) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| CliError::Input(format!("invalid spec: {e}")))?;
        let at = |key: &str| match line_of(text, key) {
            Some(l) => format!("line {l}: "),
            None => String::new(),
        };
        match raw.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(CliError::Input(format!(
                    "{}unsupported schema_version {v}; this build reads version {SCHEMA_VERSION}",
                    at("schema_version")
                )))
            }
            None => return Err(CliError::Input(format!("spec must set schema_version = {SCHEMA_VERSION}"))),
        }
        let mut s = Self::profile(profile);
        if let Some(v) = raw.seed {
            s.seed = v;
        }
        if let Some(v) = raw.repetitions {
            s.repetitions = v;
        }
        if let Some(v) = raw.sample_sizes {
            s.sample_sizes = v;
        }
        if let Some(v) = raw.methods {
            s.methods = v;
        }
        if let Some(t) = raw.truth {
            if let Some(v) = t.m {
                s.truth.m = v;
            }
            if let Some(v) = t.weights {
                s.truth.weights = v;
            }
            if let Some(v) = t.noise_sd {
                s.truth.noise_sd = v;
            }
        }
        if let Some(t) = raw.train {
            let c = &mut s.train.config;
            c.epochs = t.epochs.unwrap_or(c.epochs);
            c.batch_size = t.batch_size.unwrap_or(c.batch_size);
            c.mc_samples = t.mc_samples.unwrap_or(c.mc_samples);
            c.lr = t.lr.unwrap_or(c.lr);
            c.sigma_trainable = t.sigma_trainable.unwrap_or(c.sigma_trainable);
            c.sigma_min = t.sigma_min.unwrap_or(c.sigma_min);
            c.sigma_max = t.sigma_max.unwrap_or(c.sigma_max);
            c.fixed_latents = t.fixed_latents.unwrap_or(c.fixed_latents);
            s.train.hidden = t.hidden.unwrap_or(s.train.hidden);
            s.train.encoder_hidden = t.encoder_hidden.unwrap_or(s.train.encoder_hidden);
            s.train.sigma_init = t.sigma_init.unwrap_or(s.train.sigma_init);
        }
        if let Some(b) = raw.brute_force {
            s.brute_force_kappa = b.kappa.unwrap_or(s.brute_force_kappa);
            s.brute_force_generator = b.generator.map(PathBuf::from);
        }
        if let Some(q) = raw.quadrature {
            s.quadrature_points = q.points.unwrap_or(s.quadrature_points);
            s.quadrature_margin = q.margin.unwrap_or(s.quadrature_margin);
        }
        s.validate().map_err(|(key, msg)| CliError::Input(format!("{}`{key}`: {msg}", at(key))))?;
        Ok(s)
    }

    pub fn validate_all(&self) -> Result<()> {
        self.validate().map_err(|(key, msg)| CliError::Input(format!("`{key}`: {msg}")))
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.repetitions == 0 {
            return Err(("repetitions", "must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes[0] < 2 {
            return Err(("sample_sizes", "need at least one size, each at least 2".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(("sample_sizes", "must be strictly increasing".into()));
        }
        if self.methods.is_empty() {
            return Err(("methods", "list at least one method".into()));
        }
        let d = self.truth.dim();
        if !(1..=3).contains(&d) {
            return Err(("m", format!("quadrature supports 1 to 3 dimensions, got {d}")));
        }
        if self.truth.m.iter().any(|v| !v.is_finite()) || self.truth.m.iter().all(|v| *v == 0.0) {
            return Err(("m", "must be finite and nonzero".into()));
        }
        let [a, b] = self.truth.weights;
        if !(a > 0.0 && b > 0.0 && ((a + b) - 1.0).abs() <= 1e-12) {
            return Err(("weights", "must be positive and sum to 1".into()));
        }
        if !(self.truth.noise_sd > 0.0) {
            return Err(("noise_sd", "must be positive".into()));
        }
        let c = &self.train.config;
        if c.epochs == 0 {
            return Err(("epochs", "must be at least 1".into()));
        }
        if c.batch_size == 0 || c.batch_size > self.sample_sizes[0] {
            return Err(("batch_size", format!("must lie in 1..={}", self.sample_sizes[0])));
        }
        if c.mc_samples == 0 {
            return Err(("mc_samples", "must be at least 1".into()));
        }
        if !(c.lr >= 0.0 && c.lr.is_finite()) {
            return Err(("lr", "must be a finite non-negative number".into()));
        }
        if !(c.sigma_min > 0.0 && c.sigma_min <= c.sigma_max) {
            return Err(("sigma_min", "need 0 < sigma_min <= sigma_max".into()));
        }
        if !(self.train.sigma_init > 0.0) {
            return Err(("sigma_init", "must be positive".into()));
        }
        if self.train.hidden == 0 {
            return Err(("hidden", "must be at least 1".into()));
        }
        if self.train.encoder_hidden == 0 {
            return Err(("encoder_hidden", "must be at least 1".into()));
        }
        if !(self.brute_force_kappa > 0.0 && self.brute_force_kappa < 0.25) {
            return Err(("kappa", "must lie in (0, 0.25)".into()));
        }
        if self.quadrature_points < 3 || self.quadrature_points.is_multiple_of(2) {
            return Err(("points", "Simpson needs an odd count of at least 3".into()));
        }
        if !(self.quadrature_margin > 0.0) {
            return Err(("margin", "must be positive".into()));
        }
        Ok(())
    }
}

/// First line whose key is `key`, 1-based.
pub(crate) fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    schema_version: Option<u32>,
    seed: Option<u64>,
    repetitions: Option<usize>,
    sample_sizes: Option<Vec<usize>>,
    methods: Option<Vec<Method>>,
    truth: Option<RawTruth>,
    train: Option<RawTrain>,
    brute_force: Option<RawBruteForce>,
    quadrature: Option<RawQuadrature>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    m: Option<Vec<f64>>,
    weights: Option<[f64; 2]>,
    noise_sd: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    mc_samples: Option<usize>,
    lr: Option<f64>,
    hidden: Option<usize>,
    encoder_hidden: Option<usize>,
    sigma_init: Option<f64>,
    sigma_trainable: Option<bool>,
    sigma_min: Option<f64>,
    sigma_max: Option<f64>,
    fixed_latents: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBruteForce {
    kappa: Option<f64>,
    generator: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    points: Option<usize>,
    margin: Option<f64>,
}
