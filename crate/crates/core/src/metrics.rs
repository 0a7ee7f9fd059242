//! Distances between densities: Hellinger and Kullback-Leibler by tensorized
//! composite Simpson quadrature, closed-form Hellinger between Gaussians, and a
//! Monte-Carlo Hellinger estimate for higher dimensions.
//!
//! Hellinger distances are normalized so that for Gaussians
//! `d_H^2 = 1 - BC`, with `BC` the Bhattacharyya coefficient:
//!
//! ```text
//! d_H^2(p, q) = 1/2 * int (sqrt p - sqrt q)^2 dx = 1 - int sqrt(p q) dx,
//! ```
//!
//! so `0 <= d_H <= 1`.

use crate::density::GenerativeDensity;
use crate::{Error, Result};

/// Upper limit on the number of quadrature nodes in a grid.
pub const DEFAULT_NODE_BUDGET: usize = 4_000_000;

/// Margin, in units of the largest noise scale, added around effective supports.
pub const SUPPORT_MARGIN: f64 = 8.0;

/// Tensor-product composite Simpson grid on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points: Vec<usize>,
}

impl QuadratureGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        Self::with_budget(lower, upper, points, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(lower: Vec<f64>, upper: Vec<f64>, points: Vec<usize>, budget: usize) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || points.len() != d {
            return Err(Error::Input("grid bounds and point counts must share a positive dimension".into()));
        }
        for i in 0..d {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::Domain(format!(
                    "axis {i}: bounds [{}, {}] are not a finite interval",
                    lower[i], upper[i]
                )));
            }
            if points[i] < 3 || points[i].is_multiple_of(2) {
                return Err(Error::Domain(format!(
                    "axis {i}: Simpson needs an odd point count >= 3, got {}",
                    points[i]
                )));
            }
        }
        let total = points.iter().try_fold(1usize, |acc, &p| acc.checked_mul(p));
        match total {
            Some(t) if t <= budget => Ok(Self { lower, upper, points }),
            _ => Err(Error::Domain(format!("grid exceeds the node budget of {budget}"))),
        }
    }

    /// Same bounds and point count on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], vec![points; dim])
    }

    /// Default grid around the box `[lo, hi]`: padded by eight noise scales,
    /// 401 points per axis up to two dimensions and 101 in three.
    pub fn covering(lo: &[f64], hi: &[f64], sigma_max: f64) -> Result<Self> {
        let d = lo.len();
        let points = match d {
            1 | 2 => 401,
            3 => 101,
            _ => return Err(Error::Domain(format!("quadrature supports d <= 3, got {d}"))),
        };
        let pad = SUPPORT_MARGIN * sigma_max;
        Self::new(
            lo.iter().map(|v| v - pad).collect(),
            hi.iter().map(|v| v + pad).collect(),
            vec![points; d],
        )
    }

    /// Same bounds with a different point count per axis.
    pub fn with_points(&self, points: usize) -> Result<Self> {
        Self::new(self.lower.clone(), self.upper.clone(), vec![points; self.dim()])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn num_nodes(&self) -> usize {
        self.points.iter().product()
    }

    fn axis(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.points[i];
        let h = (self.upper[i] - self.lower[i]) / (n - 1) as f64;
        let nodes = (0..n).map(|k| self.lower[i] + k as f64 * h).collect();
        let weights = (0..n)
            .map(|k| {
                let c = if k == 0 || k == n - 1 {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        (nodes, weights)
    }

    /// All nodes in odometer order (last axis fastest).
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.num_nodes());
        self.for_each_node(|x, _| out.push(x.to_vec()));
        out
    }

    fn for_each_node(&self, mut f: impl FnMut(&[f64], f64)) {
        let d = self.dim();
        let axes: Vec<_> = (0..d).map(|i| self.axis(i)).collect();
        let mut idx = vec![0usize; d];
        let mut x: Vec<f64> = axes.iter().map(|a| a.0[0]).collect();
        loop {
            let w: f64 = (0..d).map(|i| axes[i].1[idx[i]]).product();
            f(&x, w);
            let mut i = d;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < self.points[i] {
                    x[i] = axes[i].0[idx[i]];
                    break;
                }
                idx[i] = 0;
                x[i] = axes[i].0[0];
            }
        }
    }

    /// Simpson approximation of `int f` over the box. The first error returned
    /// by `f` aborts the sum.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
        let mut total = 0.0;
        let mut err = None;
        self.for_each_node(|x, w| {
            if err.is_some() {
                return;
            }
            match f(x) {
                Ok(v) => total += w * v,
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(total),
        }
    }
}

fn check_finite(v: f64, which: &str, x: &[f64]) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("density {which} is {v} at node {x:?}")))
    }
}

/// Squared Hellinger distance by quadrature, clamped to `[0, 1]`.
pub fn hellinger_sq_quadrature<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    let v = grid.integrate(|x| {
        let a = check_finite(p(x), "p", x)?.sqrt();
        let b = check_finite(q(x), "q", x)?.sqrt();
        Ok(0.5 * (a - b) * (a - b))
    })?;
    Ok(v.clamp(0.0, 1.0))
}

/// Hellinger distance by quadrature, in `[0, 1]`.
pub fn hellinger_quadrature<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    hellinger_sq_quadrature(p, q, grid).map(f64::sqrt)
}

/// `int p log(p / q)` by quadrature, with `0 log(0/q) = 0`.
pub fn kl_quadrature<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> Result<f64>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    grid.integrate(|x| {
        let a = check_finite(p(x), "p", x)?;
        let b = check_finite(q(x), "q", x)?;
        if a == 0.0 {
            Ok(0.0)
        } else if b == 0.0 {
            Err(Error::Numeric(format!("divergence: q = 0 where p > 0 at node {x:?}")))
        } else {
            Ok(a * (a / b).ln())
        }
    })
}

/// Monte-Carlo Hellinger estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McHellinger {
    /// Estimated `d_H`, clamped to `[0, 1]`.
    pub distance: f64,
    /// Estimated `d_H^2 = 1 - E_p[sqrt(q/p)]` before clamping.
    pub squared: f64,
    /// Standard error of `squared`.
    pub std_error: f64,
}

/// Hellinger distance from draws of `p`, using `d_H^2 = 1 - E_p[sqrt(q/p)]`.
pub fn hellinger_mc<P, Q>(p: P, q: Q, samples_from_p: &[Vec<f64>]) -> Result<McHellinger>
where
    P: Fn(&[f64]) -> f64,
    Q: Fn(&[f64]) -> f64,
{
    let n = samples_from_p.len();
    if n < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    let ratios: Vec<f64> = samples_from_p
        .iter()
        .map(|x| {
            let a = check_finite(p(x), "p", x)?;
            let b = check_finite(q(x), "q", x)?;
            if a == 0.0 {
                return Err(Error::Numeric(format!("p vanishes at its own sample {x:?}")));
            }
            Ok((b / a).sqrt())
        })
        .collect::<Result<_>>()?;
    let mean = ratios.iter().sum::<f64>() / n as f64;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
    let squared = 1.0 - mean;
    Ok(McHellinger {
        distance: squared.clamp(0.0, 1.0).sqrt(),
        squared,
        std_error: (var / n as f64).sqrt(),
    })
}

/// Lower-triangular Cholesky factor of a row-major SPD matrix.
fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            if (a[i * d + j] - a[j * d + i]).abs() > 1e-12 * (a[i * d + j].abs() + a[j * d + i].abs()).max(1.0) {
                return Err(Error::Domain("covariance is not symmetric".into()));
            }
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Domain("covariance is not positive definite".into()));
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Ok(l)
}

fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
}

/// `v^T A^{-1} v` given the Cholesky factor of `A`.
fn quad_form_inv(l: &[f64], d: usize, v: &[f64]) -> f64 {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = v[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    y.iter().map(|t| t * t).sum()
}

/// Squared Hellinger distance between `N(mu1, cov1)` and `N(mu2, cov2)`;
/// covariances are row-major `d x d`.
pub fn gaussian_hellinger_sq(mu1: &[f64], cov1: &[f64], mu2: &[f64], cov2: &[f64]) -> Result<f64> {
    let d = mu1.len();
    if d == 0 || mu2.len() != d || cov1.len() != d * d || cov2.len() != d * d {
        return Err(Error::Input("mean and covariance shapes disagree".into()));
    }
    let l1 = cholesky(cov1, d)?;
    let l2 = cholesky(cov2, d)?;
    let avg: Vec<f64> = cov1.iter().zip(cov2).map(|(a, b)| 0.5 * (a + b)).collect();
    let la = cholesky(&avg, d)?;
    let diff: Vec<f64> = mu1.iter().zip(mu2).map(|(a, b)| a - b).collect();
    let log_bc = 0.25 * log_det_from_cholesky(&l1, d) + 0.25 * log_det_from_cholesky(&l2, d)
        - 0.5 * log_det_from_cholesky(&la, d)
        - quad_form_inv(&la, d, &diff) / 8.0;
    Ok((-log_bc.exp_m1()).clamp(0.0, 1.0))
}

pub fn gaussian_hellinger(mu1: &[f64], cov1: &[f64], mu2: &[f64], cov2: &[f64]) -> Result<f64> {
    gaussian_hellinger_sq(mu1, cov1, mu2, cov2).map(f64::sqrt)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Input("need at least two matching points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Convolution-rate check: the slope of `ln d_H(N(0, I), N(0, (1 + s^2) I))`
/// against `ln s`, together with the distances themselves.
pub fn convolution_rate_check(sigmas: &[f64], dim: usize) -> Result<(f64, Vec<f64>)> {
    if sigmas.len() < 3 {
        return Err(Error::Input("need at least three sigma values".into()));
    }
    let mu = vec![0.0; dim];
    let eye = identity(dim, 1.0);
    let dists = sigmas
        .iter()
        .map(|s| gaussian_hellinger(&mu, &eye, &mu, &identity(dim, 1.0 + s * s)))
        .collect::<Result<Vec<_>>>()?;
    Ok((log_log_slope(sigmas, &dists)?, dists))
}

fn identity(d: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = scale;
    }
    m
}

/// Coordinate-wise bounding box of a set of points.
pub fn bounding_box<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let mut lo = first.to_vec();
    let mut hi = first.to_vec();
    for p in it {
        for (i, v) in p.iter().enumerate() {
            lo[i] = lo[i].min(*v);
            hi[i] = hi[i].max(*v);
        }
    }
    Some((lo, hi))
}

/// Bounding box of the generator's range, from its segment endpoints.
pub fn generator_box(p: &GenerativeDensity) -> (Vec<f64>, Vec<f64>) {
    let form = p.form();
    let ends: Vec<Vec<f64>> = form
        .segments()
        .flat_map(|s| {
            let at = |z: f64| -> Vec<f64> { s.intercept.iter().zip(s.slope).map(|(c, v)| c + v * z).collect() };
            [at(s.lo), at(s.hi)]
        })
        .collect();
    bounding_box(ends.iter().map(Vec::as_slice)).expect("a generator has at least one segment")
}

/// Default grid covering both densities' generator ranges.
pub fn default_grid(p: &GenerativeDensity, q: &GenerativeDensity) -> Result<QuadratureGrid> {
    let (lp, hp) = generator_box(p);
    let (lq, hq) = generator_box(q);
    let lo: Vec<f64> = lp.iter().zip(&lq).map(|(a, b)| a.min(*b)).collect();
    let hi: Vec<f64> = hp.iter().zip(&hq).map(|(a, b)| a.max(*b)).collect();
    QuadratureGrid::covering(&lo, &hi, p.sigma().max(q.sigma()))
}
