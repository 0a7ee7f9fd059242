//! The implicit density `p_{g,sigma}(x) = int_0^1 phi_sigma(x - g(z)) dz`.
//!
//! For a piecewise-linear generator each affine piece `g(z) = c + v z` on
//! `[lo, hi]` contributes a one-dimensional Gaussian integral. Completing the
//! square around `z0 = <x - c, v> / |v|^2` gives
//!
//! ```text
//! int_lo^hi phi_sigma(x - c - v z) dz
//!     = phi_sigma(r) * sqrt(2 pi) sigma / |v| * [Phi(B) - Phi(A)]
//! ```
//!
//! with `r = x - c - v z0` the residual orthogonal to `v` (in `R^d`, with
//! `phi_sigma` the `d`-variate kernel) and `A, B = (lo - z0, hi - z0) |v| / sigma`.
//! Everything is accumulated in log space.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::networks::{Generator, PiecewiseLinearForm, Segment, ShallowGenerator};
use crate::special::{log_diff_std_normal_cdf, log_isotropic_normal, log_sum_exp, GAUSS_LEGENDRE_5, HALF_LN_2PI};
use crate::{Error, Result};

/// Segments whose normalized extent `|v| (hi - lo) / sigma` is below this are
/// integrated by Gauss-Legendre quadrature instead of the erf difference,
/// which would cancel catastrophically.
const SHORT_SEGMENT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GenerativeDensity {
    generator: Generator,
    sigma: f64,
    form: PiecewiseLinearForm,
}

impl GenerativeDensity {
    pub fn new(generator: impl Into<Generator>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let generator = generator.into();
        let form = generator.to_piecewise_linear();
        Ok(Self {
            generator,
            sigma,
            form,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// The shallow network, if the generator is one.
    pub fn shallow(&self) -> Option<&ShallowGenerator> {
        match &self.generator {
            Generator::Shallow(g) => Some(g),
            Generator::Step(_) => None,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn form(&self) -> &PiecewiseLinearForm {
        &self.form
    }

    /// `ln p_{g,sigma}(x)`, exact up to floating-point rounding.
    pub fn exact_log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let mut terms = [0.0f64; 64];
        let n = self.form.num_segments();
        if n <= terms.len() {
            for (t, seg) in terms.iter_mut().zip(self.form.segments()) {
                *t = log_segment_integral(x, &seg, self.sigma);
            }
            log_sum_exp(&terms[..n])
        } else {
            let v: Vec<f64> = self
                .form
                .segments()
                .map(|seg| log_segment_integral(x, &seg, self.sigma))
                .collect();
            log_sum_exp(&v)
        }
    }

    pub fn exact_density(&self, x: &[f64]) -> f64 {
        self.exact_log_density(x).exp()
    }

    /// Monte-Carlo estimate `ln((1/m) sum_i phi_sigma(x - g(Z_i)))`, `Z_i ~ U[0,1]`.
    pub fn mc_log_density<R: Rng + ?Sized>(&self, x: &[f64], m: usize, rng: &mut R) -> f64 {
        assert!(m >= 1, "need at least one latent draw");
        let terms: Vec<f64> = (0..m)
            .map(|_| {
                let z: f64 = rng.random();
                let gz = self.form.eval(z);
                let sq: f64 = x.iter().zip(&gz).map(|(a, b)| (a - b) * (a - b)).sum();
                log_isotropic_normal(sq, self.sigma, x.len())
            })
            .collect();
        log_sum_exp(&terms) - (m as f64).ln()
    }

    /// Draws `g(Z) + eps` with `Z ~ U[0,1]` and `eps ~ N(0, sigma^2 I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let z: f64 = rng.random();
                let mut x = self.form.eval(z);
                for c in x.iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    *c += self.sigma * e;
                }
                x
            })
            .collect()
    }

    /// `sum_i ln p_{g,sigma}(x_i)`.
    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        data.iter().map(|x| self.exact_log_density(x)).sum()
    }

    pub fn mean_log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        self.log_likelihood(data) / data.len() as f64
    }
}

/// `ln int_lo^hi phi_sigma(x - c - v z) dz`.
pub(crate) fn log_segment_integral(x: &[f64], seg: &Segment<'_>, sigma: f64) -> f64 {
    let d = x.len();
    let len = seg.hi - seg.lo;
    let vv: f64 = seg.slope.iter().map(|v| v * v).sum();
    if vv == 0.0 {
        let sq: f64 = x.iter().zip(seg.intercept).map(|(a, c)| (a - c) * (a - c)).sum();
        return len.ln() + log_isotropic_normal(sq, sigma, d);
    }
    let nv = vv.sqrt();
    if nv * len / sigma < SHORT_SEGMENT {
        let half = 0.5 * len;
        let mid = seg.lo + half;
        let mut terms = [0.0; 5];
        for (t, (node, w)) in terms.iter_mut().zip(GAUSS_LEGENDRE_5) {
            let z = mid + half * node;
            let sq: f64 = (0..d)
                .map(|i| {
                    let r = x[i] - seg.intercept[i] - seg.slope[i] * z;
                    r * r
                })
                .sum();
            *t = (w * half).ln() + log_isotropic_normal(sq, sigma, d);
        }
        return log_sum_exp(&terms);
    }
    let uv: f64 = (0..d).map(|i| (x[i] - seg.intercept[i]) * seg.slope[i]).sum();
    let z0 = uv / vv;
    let r2: f64 = (0..d)
        .map(|i| {
            let r = x[i] - seg.intercept[i] - seg.slope[i] * z0;
            r * r
        })
        .sum();
    let a = (seg.lo - z0) * nv / sigma;
    let b = (seg.hi - z0) * nv / sigma;
    log_isotropic_normal(r2, sigma, d) + (sigma / nv).ln() + HALF_LN_2PI + log_diff_std_normal_cdf(a, b)
}

/// Value and gradient of the Monte-Carlo log-likelihood with fixed latents.
#[derive(Debug, Clone, PartialEq)]
pub struct McGradient {
    /// `sum_i ln((1/m) sum_j phi_sigma(x_i - g(z_j)))`.
    pub value: f64,
    /// Gradient with respect to the generator parameters, in the order of
    /// [`ShallowGenerator::params`].
    pub generator: Vec<f64>,
    /// Derivative with respect to `sigma`.
    pub sigma: f64,
}

/// Monte-Carlo objective and its exact gradient for the latent draws `latents`.
///
/// Per datum the log-mean-exp over draws is differentiated with
/// self-normalized weights `w_ij ∝ phi_sigma(x_i - g(z_j))`, giving per-draw
/// pulls `p_j = sum_i w_ij (x_i - g(z_j)) / sigma^2`. Hidden unit `l` is
/// active on a half-line of `z`, so over sorted draws its active set is a
/// contiguous range and every parameter derivative reduces to prefix sums of
/// `p_j` and `p_j z_j`. Exactly-at-kink units get zero derivative.
pub fn mc_objective_grad(g: &ShallowGenerator, sigma: f64, data: &[Vec<f64>], latents: &[f64]) -> McGradient {
    let m = latents.len();
    let d = g.dim();
    let w = g.width();
    let mut grad = vec![0.0; g.num_params()];
    if data.is_empty() || m == 0 {
        return McGradient {
            value: 0.0,
            generator: grad,
            sigma: 0.0,
        };
    }
    let mut zs = latents.to_vec();
    zs.sort_by(f64::total_cmp);
    let form = g.to_piecewise_linear();
    // one column per output coordinate
    let mut gz = vec![vec![0.0; m]; d];
    let mut seg = 0;
    for (j, &z) in zs.iter().enumerate() {
        while seg + 1 < form.num_segments() && z > form.boundaries[seg + 1] {
            seg += 1;
        }
        for (i, col) in gz.iter_mut().enumerate() {
            col[j] = form.intercepts[seg][i] + form.slopes[seg][i] * z;
        }
    }

    let inv_s2 = 1.0 / (sigma * sigma);
    let scale = -0.5 * inv_s2;
    let log_norm = (m as f64).ln() + d as f64 * (HALF_LN_2PI + sigma.ln());
    let mut pull = vec![vec![0.0; m]; d];
    let mut weight = vec![0.0; m];
    let mut sq = vec![0.0; m];
    let mut value = 0.0;
    let mut dsigma = 0.0;
    for x in data {
        sq.iter_mut().for_each(|v| *v = 0.0);
        for (xi, col) in x.iter().zip(&gz) {
            for (s, g) in sq.iter_mut().zip(col) {
                let r = xi - g;
                *s += r * r;
            }
        }
        let min_sq = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (wj, s) in weight.iter_mut().zip(&sq) {
            *wj = ((s - min_sq) * scale).exp();
            total += *wj;
        }
        value += min_sq * scale + total.ln() - log_norm;
        let norm = inv_s2 / total;
        let mut spread = 0.0;
        for (wj, s) in weight.iter().zip(&sq) {
            spread += wj * s;
        }
        for ((xi, col), pcol) in x.iter().zip(&gz).zip(pull.iter_mut()) {
            for ((p, g), wj) in pcol.iter_mut().zip(col).zip(&weight) {
                *p += wj * norm * (xi - g);
            }
        }
        dsigma += -(d as f64) / sigma + spread / (total * sigma * sigma * sigma);
    }

    // prefix sums of p_j and p_j z_j per coordinate
    let mut ps = vec![vec![0.0; m + 1]; d];
    let mut pzs = vec![vec![0.0; m + 1]; d];
    for i in 0..d {
        for (j, &z) in zs.iter().enumerate() {
            ps[i][j + 1] = ps[i][j] + pull[i][j];
            pzs[i][j + 1] = pzs[i][j] + pull[i][j] * z;
        }
    }
    let (g_win, rest) = grad.split_at_mut(w);
    let (g_b, rest) = rest.split_at_mut(w);
    let (g_out, g_c) = rest.split_at_mut(d * w);
    let w_out = g.w_out();
    for l in 0..w {
        let (a, b) = (g.w_in()[l], g.bias()[l]);
        let (lo, hi) = if a > 0.0 {
            (zs.partition_point(|&z| a * z - b <= 0.0), m)
        } else if a < 0.0 {
            (0, zs.partition_point(|&z| a * z - b > 0.0))
        } else if -b > 0.0 {
            (0, m)
        } else {
            (0, 0)
        };
        if lo >= hi {
            continue;
        }
        let mut back_p = 0.0;
        let mut back_pz = 0.0;
        for i in 0..d {
            let sp = ps[i][hi] - ps[i][lo];
            let spz = pzs[i][hi] - pzs[i][lo];
            g_out[i * w + l] += a * spz - b * sp;
            back_p += w_out[i * w + l] * sp;
            back_pz += w_out[i * w + l] * spz;
        }
        g_win[l] += back_pz;
        g_b[l] -= back_p;
    }
    for (i, c) in g_c.iter_mut().enumerate() {
        *c += ps[i][m];
    }
    McGradient {
        value,
        generator: grad,
        sigma: dsigma,
    }
}

/// Adds `d<pull, g(z)>/d params` to `grad`, given the hidden activations at `z`.
pub(crate) fn backprop_pull(g: &ShallowGenerator, z: f64, hidden: &[f64], pull: &[f64], grad: &mut [f64]) {
    let d = g.dim();
    let w = g.width();
    let (g_win, rest) = grad.split_at_mut(w);
    let (g_b, rest) = rest.split_at_mut(w);
    let (g_out, g_c) = rest.split_at_mut(d * w);
    let w_out = g.w_out();
    for i in 0..d {
        let row = &mut g_out[i * w..(i + 1) * w];
        for (o, h) in row.iter_mut().zip(hidden) {
            *o += pull[i] * h;
        }
    }
    for l in 0..w {
        if hidden[l] > 0.0 {
            let dh: f64 = (0..d).map(|i| pull[i] * w_out[i * w + l]).sum();
            g_win[l] += dh * z;
            g_b[l] -= dh;
        }
    }
    for (c, p) in g_c.iter_mut().zip(pull) {
        *c += p;
    }
}

/// Draws `m` fresh latents and returns [`mc_objective_grad`] for `p`.
pub fn grad_mc_objective<R: Rng + ?Sized>(
    p: &GenerativeDensity,
    data: &[Vec<f64>],
    m: usize,
    rng: &mut R,
) -> Result<McGradient> {
    let g = p
        .shallow()
        .ok_or_else(|| Error::Input("gradients need a shallow network generator".into()))?;
    if m == 0 {
        return Err(Error::Input("need at least one latent draw".into()));
    }
    let latents: Vec<f64> = (0..m).map(|_| rng.random()).collect();
    Ok(mc_objective_grad(g, p.sigma(), data, &latents))
}

/// Sieve: width-`width` networks with sup norm at most `f_bound`, parameters
/// bounded by `m_bound`, and `sigma` in `[sigma_min, sigma_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SieveSpec {
    pub f_bound: f64,
    pub m_bound: f64,
    pub width: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

impl SieveSpec {
    pub fn new(f_bound: f64, m_bound: f64, width: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if !(f_bound > 0.0 && m_bound > 0.0 && width > 0 && sigma_min > 0.0 && sigma_min <= sigma_max) {
            return Err(Error::Domain("invalid sieve parameters".into()));
        }
        Ok(Self {
            f_bound,
            m_bound,
            width,
            sigma_min,
            sigma_max,
        })
    }

    pub fn contains(&self, p: &GenerativeDensity) -> bool {
        let Some(g) = p.shallow() else {
            return false;
        };
        g.width() == self.width
            && g.in_class(self.f_bound, self.m_bound)
            && (self.sigma_min..=self.sigma_max).contains(&p.sigma())
    }
}

/// True when the candidate's average log-likelihood is within `eta` of the
/// best competitor's.
pub fn is_sieve_mle(
    candidate: &GenerativeDensity,
    competitors: &[GenerativeDensity],
    data: &[Vec<f64>],
    eta: f64,
) -> bool {
    let own = candidate.mean_log_likelihood(data);
    let best = competitors
        .iter()
        .map(|c| c.mean_log_likelihood(data))
        .fold(f64::NEG_INFINITY, f64::max);
    own >= best - eta
}
