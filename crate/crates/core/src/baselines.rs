//! Gaussian kernel density estimation with an isotropic Silverman bandwidth.

use crate::special::{log_isotropic_normal, log_sum_exp};
use crate::{Error, Result};

/// `h = s * (n (d + 2) / 4)^(-1 / (d + 4))`, with `s` the mean of the
/// per-coordinate sample standard deviations.
pub fn silverman_bandwidth(data: &[Vec<f64>]) -> Result<f64> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Domain("bandwidth needs at least two points".into()));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|x| x.len() != d) {
        return Err(Error::Input("points must share a positive dimension".into()));
    }
    let mut sd_sum = 0.0;
    for k in 0..d {
        let mean = data.iter().map(|x| x[k]).sum::<f64>() / n as f64;
        let var = data.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        sd_sum += var.sqrt();
    }
    let spread = sd_sum / d as f64;
    if !(spread > 0.0) {
        return Err(Error::Domain("data have zero variance".into()));
    }
    let df = d as f64;
    Ok(spread * (n as f64 * (df + 2.0) / 4.0).powf(-1.0 / (df + 4.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    points: Vec<Vec<f64>>,
    bandwidth: f64,
}

impl KdeModel {
    pub fn new(points: Vec<Vec<f64>>, bandwidth: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("no training points".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { points, bandwidth })
    }

    /// Fit with the Silverman bandwidth.
    pub fn silverman(points: Vec<Vec<f64>>) -> Result<Self> {
        let h = silverman_bandwidth(&points)?;
        Self::new(points, h)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                let sq: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                log_isotropic_normal(sq, self.bandwidth, x.len())
            })
            .collect();
        log_sum_exp(&terms) - (self.points.len() as f64).ln()
    }

    /// `(1/n) sum_i phi_h(x - X_i)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }
}

pub fn kde_density(model: &KdeModel, x: &[f64]) -> f64 {
    model.density(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::DiscreteMeasure;
    use crate::metrics::QuadratureGrid;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn silverman_formula() {
        // two coordinates with unit sample standard deviation
        let mut data = Vec::new();
        for i in 0..100 {
            let v = if i % 2 == 0 { 1.0 } else { -1.0 };
            data.push(vec![v, -v]);
        }
        let s = (100.0f64 / 99.0).sqrt();
        let h = silverman_bandwidth(&data).unwrap();
        assert!((h / s - 100f64.powf(-1.0 / 6.0)).abs() < 1e-14);
        assert!((100f64.powf(-1.0 / 6.0) - 0.464_158_883_361_277_9).abs() < 1e-15);

        let scaled: Vec<Vec<f64>> = data.iter().map(|x| x.iter().map(|v| 3.0 * v).collect()).collect();
        assert!((silverman_bandwidth(&scaled).unwrap() - 3.0 * h).abs() < 1e-14);
        let doubled: Vec<Vec<f64>> = data.iter().chain(&data).cloned().collect();
        assert!(silverman_bandwidth(&doubled).unwrap() < h);
        assert!(silverman_bandwidth(&[vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn kde_examples() {
        let m = KdeModel::new(vec![vec![0.0]], 1.0).unwrap();
        assert!((kde_density(&m, &[0.0]) - 0.398_942_280_401_432_7).abs() < 1e-15);

        let mut rng = seeded(4);
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let kde = KdeModel::silverman(pts.clone()).unwrap();
        let emp = DiscreteMeasure::new(pts.clone(), vec![1.0 / 30.0; 30]).unwrap();
        for x in [[0.0, 0.0], [1.5, -0.3], [4.0, 4.0]] {
            let a = kde.density(&x);
            let b = emp.mixture_density(kde.bandwidth(), &x);
            assert!((a - b).abs() <= 1e-12 * b);
        }
        let g = QuadratureGrid::cube(2, -8.0, 8.0, 201).unwrap();
        let mass = g.integrate(|x| Ok(kde.density(x))).unwrap();
        assert!((mass - 1.0).abs() < 1e-6);
    }
}
