//! Error function, normal distribution helpers and log-space arithmetic.

use std::f64::consts::FRAC_1_SQRT_2;

/// `ln(2 pi) / 2`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Below this point `Phi(z)` is evaluated through its asymptotic expansion.
const LOG_CDF_ASYMPTOTIC: f64 = -37.0;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - HALF_LN_2PI).exp()
}

/// `ln Phi(z)`, accurate far into the lower tail.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z < LOG_CDF_ASYMPTOTIC {
        let r = 1.0 / (z * z);
        // 1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - 945/z^10
        let series = 1.0 - r * (1.0 - r * (3.0 - r * (15.0 - r * (105.0 - r * 945.0))));
        -0.5 * z * z - (-z).ln() - HALF_LN_2PI + series.ln()
    } else if z < 0.0 {
        std_normal_cdf(z).ln()
    } else {
        (-std_normal_cdf(-z)).ln_1p()
    }
}

/// `ln(Phi(b) - Phi(a))` for `a < b`, avoiding cancellation in both tails.
pub fn log_diff_std_normal_cdf(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if a == b {
        return f64::NEG_INFINITY;
    }
    // Reflect so the interval sits where Phi is small and relative precision is kept.
    let (lo, hi) = if a > 0.0 { (-b, -a) } else { (a, b) };
    let log_hi = log_std_normal_cdf(hi);
    let log_lo = log_std_normal_cdf(lo);
    log_hi + log1m_exp(log_lo - log_hi)
}

/// `ln(1 - e^x)` for `x <= 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Stable `ln sum_i exp(v_i)`; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln phi_sigma(r)` for an isotropic `d`-variate normal where `sq_norm = |r|^2`.
pub fn log_isotropic_normal(sq_norm: f64, sigma: f64, dim: usize) -> f64 {
    -(dim as f64) * (HALF_LN_2PI + sigma.ln()) - 0.5 * sq_norm / (sigma * sigma)
}

/// Five-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];
