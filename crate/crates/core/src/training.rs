//! Adam ascent and the two training procedures: Monte-Carlo likelihood
//! maximization and auto-encoding variational Bayes with a Gaussian encoder.
//!
//! `sigma` is optimized as `ln sigma` and clamped to the configured bounds
//! after every step. The per-epoch trace and the checkpoint criterion are the
//! exact mean training log-likelihood, which puts both procedures on the
//! same scale.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::{backprop_pull, mc_objective_grad, GenerativeDensity};
use crate::networks::ShallowGenerator;
use crate::special::{std_normal_pdf, HALF_LN_2PI};
use crate::{Error, Result};

pub use crate::special::std_normal_cdf as standard_normal_cdf;

/// Adam state for gradient ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub const DEFAULT_LR: f64 = 2e-4;

    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected ascent step. A non-finite gradient leaves both the
    /// state and `params` untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Input(format!(
                "optimizer holds {} parameters, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("gradient entry {i} is {}", grad[i])));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] += self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Latent draws per mini-batch for the Monte-Carlo objective.
    pub mc_samples: usize,
    pub lr: f64,
    pub sigma_trainable: bool,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Draw the Monte-Carlo latents once and keep them for the whole run.
    pub fixed_latents: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 20,
            mc_samples: 100_000,
            lr: AdamState::DEFAULT_LR,
            sigma_trainable: true,
            sigma_min: 0.05,
            sigma_max: 2.0,
            fixed_latents: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Input("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::Input(format!(
                "batch size {} must lie in 1..={n}",
                self.batch_size
            )));
        }
        if self.mc_samples == 0 {
            return Err(Error::Input("need at least one Monte-Carlo sample".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Input(format!("learning rate {} is invalid", self.lr)));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(Error::Input("sigma bounds must satisfy 0 < min <= max".into()));
        }
        Ok(())
    }
}

/// Shallow ReLU regression head `R^d -> R`: `w_out . relu(W x + b) + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderHead {
    dim: usize,
    /// `width x dim`, row-major.
    w_in: Vec<f64>,
    b: Vec<f64>,
    w_out: Vec<f64>,
    c: f64,
}

impl EncoderHead {
    fn random_init<R: Rng + ?Sized>(dim: usize, width: usize, rng: &mut R) -> Self {
        let a = 1.0 / (dim as f64).sqrt();
        let o = 1.0 / (width as f64).sqrt();
        Self {
            dim,
            w_in: (0..width * dim).map(|_| rng.random_range(-a..=a)).collect(),
            b: (0..width).map(|_| rng.random_range(-a..=a)).collect(),
            w_out: (0..width).map(|_| rng.random_range(-o..=o)).collect(),
            c: rng.random_range(-o..=o),
        }
    }

    fn width(&self) -> usize {
        self.b.len()
    }

    fn num_params(&self) -> usize {
        self.width() * (self.dim + 2) + 1
    }

    fn params_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w_in);
        out.extend_from_slice(&self.b);
        out.extend_from_slice(&self.w_out);
        out.push(self.c);
    }

    fn set_params(&mut self, p: &[f64]) {
        let w = self.width();
        let (a, rest) = p.split_at(w * self.dim);
        let (b, rest) = rest.split_at(w);
        let (o, rest) = rest.split_at(w);
        self.w_in.copy_from_slice(a);
        self.b.copy_from_slice(b);
        self.w_out.copy_from_slice(o);
        self.c = rest[0];
    }

    fn forward(&self, x: &[f64], h: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut y = self.c;
        for (l, hl) in h.iter_mut().enumerate().take(self.width()) {
            let pre: f64 = self.b[l] + (0..d).map(|k| self.w_in[l * d + k] * x[k]).sum::<f64>();
            *hl = pre.max(0.0);
            y += self.w_out[l] * *hl;
        }
        y
    }

    /// Adds `dy * d head(x) / d params` to `grad`.
    fn backward(&self, x: &[f64], h: &[f64], dy: f64, grad: &mut [f64]) {
        let d = self.dim;
        let w = self.width();
        let (g_in, rest) = grad.split_at_mut(w * d);
        let (g_b, rest) = rest.split_at_mut(w);
        let (g_out, g_c) = rest.split_at_mut(w);
        for l in 0..w {
            g_out[l] += dy * h[l];
            if h[l] > 0.0 {
                let dh = dy * self.w_out[l];
                g_b[l] += dh;
                for k in 0..d {
                    g_in[l * d + k] += dh * x[k];
                }
            }
        }
        g_c[0] += dy;
    }
}

/// Variational family `N(mu(x), exp(lv(x)))` with shallow ReLU heads for the
/// mean and the log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEncoder {
    mean: EncoderHead,
    log_var: EncoderHead,
}

impl GaussianEncoder {
    /// Heads initialized uniformly on `+-1/sqrt(fan_in)`.
    pub fn random_init<R: Rng + ?Sized>(dim: usize, width: usize, rng: &mut R) -> Self {
        let mean = EncoderHead::random_init(dim, width, rng);
        let log_var = EncoderHead::random_init(dim, width, rng);
        Self { mean, log_var }
    }

    pub fn dim(&self) -> usize {
        self.mean.dim
    }

    pub fn width(&self) -> usize {
        self.mean.width()
    }

    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_var.num_params()
    }

    /// Mean-head parameters followed by log-variance-head parameters; each
    /// head lists `W` (row-major), `b`, `w_out`, then its output bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        self.mean.params_into(&mut p);
        self.log_var.params_into(&mut p);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let (a, b) = p.split_at(self.mean.num_params());
        self.mean.set_params(a);
        self.log_var.set_params(b);
    }

    /// `(mu(x), ln sigma_psi(x)^2)`.
    pub fn moments(&self, x: &[f64]) -> (f64, f64) {
        let mut h = vec![0.0; self.width()];
        let mu = self.mean.forward(x, &mut h);
        let lv = self.log_var.forward(x, &mut h);
        (mu, lv)
    }
}

/// Single-draw evidence lower bound and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AevbGradient {
    pub value: f64,
    pub generator: Vec<f64>,
    pub sigma: f64,
    pub encoder: Vec<f64>,
}

/// `ln phi_sigma(x - g(Phi(Z))) + ln phi(Z) - ln q(Z | x)` at the
/// reparameterized draw `Z = mu(x) + exp(lv(x) / 2) * eps`, with its exact
/// gradient.
pub fn aevb_objective_at(
    g: &ShallowGenerator,
    sigma: f64,
    enc: &GaussianEncoder,
    x: &[f64],
    eps: f64,
) -> AevbGradient {
    let d = g.dim();
    let w = g.width();
    let ew = enc.width();
    let mut hm = vec![0.0; ew];
    let mut hv = vec![0.0; ew];
    let mu = enc.mean.forward(x, &mut hm);
    let lv = enc.log_var.forward(x, &mut hv);
    let s = (0.5 * lv).exp();
    let z = mu + s * eps;
    let u = standard_normal_cdf(z);

    let mut hid = vec![0.0; w];
    let mut gu = vec![0.0; d];
    g.eval_into(u, &mut hid, &mut gu);
    let inv_s2 = 1.0 / (sigma * sigma);
    let resid: Vec<f64> = x.iter().zip(&gu).map(|(a, b)| a - b).collect();
    let sq: f64 = resid.iter().map(|r| r * r).sum();
    let value = -(d as f64) * (HALF_LN_2PI + sigma.ln()) - 0.5 * sq * inv_s2 - 0.5 * z * z + 0.5 * lv + 0.5 * eps * eps;

    let pull: Vec<f64> = resid.iter().map(|r| r * inv_s2).collect();
    let mut generator = vec![0.0; g.num_params()];
    backprop_pull(g, u, &hid, &pull, &mut generator);

    // d g / d u on the active set
    let w_in = g.w_in();
    let w_out = g.w_out();
    let mut dv_du = 0.0;
    for l in 0..w {
        if hid[l] > 0.0 {
            let along: f64 = (0..d).map(|i| pull[i] * w_out[i * w + l]).sum();
            dv_du += along * w_in[l];
        }
    }
    let dv_dz = dv_du * std_normal_pdf(z) - z;
    let dv_dlv = dv_dz * 0.5 * s * eps + 0.5;

    let mut encoder = vec![0.0; enc.num_params()];
    let split = enc.mean.num_params();
    let (ge_mean, ge_lv) = encoder.split_at_mut(split);
    enc.mean.backward(x, &hm, dv_dz, ge_mean);
    enc.log_var.backward(x, &hv, dv_dlv, ge_lv);

    AevbGradient {
        value,
        generator,
        sigma: -(d as f64) / sigma + sq * inv_s2 / sigma,
        encoder,
    }
}

/// [`aevb_objective_at`] with `eps ~ N(0, 1)` drawn from `rng`.
pub fn aevb_objective<R: Rng + ?Sized>(
    g: &ShallowGenerator,
    sigma: f64,
    enc: &GaussianEncoder,
    x: &[f64],
    rng: &mut R,
) -> AevbGradient {
    let eps: f64 = rng.sample(StandardNormal);
    aevb_objective_at(g, sigma, enc, x, eps)
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    /// Parameters at the epoch with the highest exact training log-likelihood.
    pub best: GenerativeDensity,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: GenerativeDensity,
    /// Encoder after the last epoch, for AEVB runs.
    pub encoder: Option<GaussianEncoder>,
    /// Exact mean training log-likelihood after each epoch.
    pub trace: Vec<f64>,
    /// Mean surrogate objective (Monte-Carlo likelihood or ELBO) over each epoch.
    pub surrogate_trace: Vec<f64>,
}

impl TrainRun {
    pub fn best_objective(&self) -> f64 {
        self.trace[self.best_epoch]
    }

    pub fn final_objective(&self) -> f64 {
        *self.trace.last().expect("at least one epoch")
    }
}

/// Parameter vector layout shared by both procedures:
/// generator parameters, then `ln sigma`, then anything else.
struct Packed {
    generator: ShallowGenerator,
    gen_len: usize,
}

impl Packed {
    fn unpack(&mut self, params: &[f64], cfg: &TrainConfig) -> f64 {
        self.generator.set_params(&params[..self.gen_len]);
        params[self.gen_len].exp().clamp(cfg.sigma_min, cfg.sigma_max)
    }
}

fn start(init: &GenerativeDensity, data: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Packed, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::Input("training data is empty".into()));
    }
    cfg.validate(data.len())?;
    let g = init
        .shallow()
        .ok_or_else(|| Error::Input("training needs a shallow network generator".into()))?
        .clone();
    if data.iter().any(|x| x.len() != g.dim()) {
        return Err(Error::Input("data dimension differs from the generator's".into()));
    }
    let mut params = g.params();
    let gen_len = params.len();
    params.push(init.sigma().clamp(cfg.sigma_min, cfg.sigma_max).ln());
    Ok((Packed { generator: g, gen_len }, params))
}

struct Tracker {
    best: Option<(f64, GenerativeDensity, usize)>,
    trace: Vec<f64>,
    surrogate: Vec<f64>,
}

impl Tracker {
    fn new(epochs: usize) -> Self {
        Self {
            best: None,
            trace: Vec::with_capacity(epochs),
            surrogate: Vec::with_capacity(epochs),
        }
    }

    fn record(&mut self, model: GenerativeDensity, data: &[Vec<f64>], surrogate: f64) -> Result<()> {
        let epoch = self.trace.len();
        let ll = model.mean_log_likelihood(data);
        if !ll.is_finite() || !surrogate.is_finite() {
            return Err(Error::Numeric(format!(
                "objective became non-finite at epoch {epoch}; trace so far {:?}",
                self.trace
            )));
        }
        self.trace.push(ll);
        self.surrogate.push(surrogate);
        if self.best.as_ref().is_none_or(|b| ll > b.0) {
            self.best = Some((ll, model, epoch));
        }
        Ok(())
    }

    fn finish(self, last: GenerativeDensity, encoder: Option<GaussianEncoder>) -> TrainRun {
        let (_, best, best_epoch) = self.best.expect("at least one epoch");
        TrainRun {
            best,
            best_epoch,
            last,
            encoder,
            trace: self.trace,
            surrogate_trace: self.surrogate,
        }
    }
}

/// Adam ascent on the Monte-Carlo log-likelihood over shuffled mini-batches.
pub fn fit_mc<R: Rng + ?Sized>(
    data: &[Vec<f64>],
    init: &GenerativeDensity,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainRun> {
    let (mut packed, mut params) = start(init, data, cfg)?;
    let n = data.len();
    let gen_len = packed.gen_len;
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut latents: Vec<f64> = (0..cfg.mc_samples).map(|_| rng.random()).collect();
    let mut batch: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut grad = vec![0.0; params.len()];
    let mut tracker = Tracker::new(cfg.epochs);
    let mut sigma = packed.unpack(&params, cfg);

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_value = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            if !cfg.fixed_latents {
                latents.iter_mut().for_each(|z| *z = rng.random());
            }
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let out = mc_objective_grad(&packed.generator, sigma, &batch, &latents);
            epoch_value += out.value;
            grad[..gen_len].copy_from_slice(&out.generator);
            grad[gen_len] = if cfg.sigma_trainable { out.sigma * sigma } else { 0.0 };
            adam.step(&mut params, &grad)?;
            sigma = packed.unpack(&params, cfg);
            params[gen_len] = sigma.ln();
        }
        let model = GenerativeDensity::new(packed.generator.clone(), sigma)?;
        tracker.record(model, data, epoch_value / n as f64)?;
    }
    let last = GenerativeDensity::new(packed.generator, sigma)?;
    Ok(tracker.finish(last, None))
}

/// Joint Adam ascent over generator, `sigma` and encoder on the single-draw
/// evidence lower bound, one reparameterized draw per datum per step.
pub fn fit_aevb<R: Rng + ?Sized>(
    data: &[Vec<f64>],
    init: &GenerativeDensity,
    encoder: &GaussianEncoder,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainRun> {
    let (mut packed, mut params) = start(init, data, cfg)?;
    if encoder.dim() != packed.generator.dim() {
        return Err(Error::Input("encoder dimension differs from the generator's".into()));
    }
    let n = data.len();
    let gen_len = packed.gen_len;
    let enc_start = gen_len + 1;
    params.extend(encoder.params());
    let mut enc = encoder.clone();
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; params.len()];
    let mut tracker = Tracker::new(cfg.epochs);
    let mut sigma = packed.unpack(&params, cfg);

    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_value = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|v| *v = 0.0);
            for &i in chunk {
                let out = aevb_objective(&packed.generator, sigma, &enc, &data[i], rng);
                epoch_value += out.value;
                for (a, b) in grad[..gen_len].iter_mut().zip(&out.generator) {
                    *a += b;
                }
                if cfg.sigma_trainable {
                    grad[gen_len] += out.sigma * sigma;
                }
                for (a, b) in grad[enc_start..].iter_mut().zip(&out.encoder) {
                    *a += b;
                }
            }
            adam.step(&mut params, &grad)?;
            sigma = packed.unpack(&params, cfg);
            params[gen_len] = sigma.ln();
            enc.set_params(&params[enc_start..]);
        }
        let model = GenerativeDensity::new(packed.generator.clone(), sigma)?;
        tracker.record(model, data, epoch_value / n as f64)?;
    }
    let last = GenerativeDensity::new(packed.generator, sigma)?;
    Ok(tracker.finish(last, Some(enc)))
}
