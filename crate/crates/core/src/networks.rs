//! Generators `[0,1] -> R^d`: shallow ReLU networks and step functions.
//!
//! A [`ShallowGenerator`] of width `d1` computes
//!
//! ```text
//! g(z) = W_out * relu(w_in * z - b) (+ c)
//! ```
//!
//! with hidden unit `j` active when `w_in[j] * z > b[j]`. It is continuous
//! and affine between its breakpoints `b[j] / w_in[j]`, so every quantity we
//! need (sup norm, exact density integrals, L2 distances) can be computed
//! segment by segment from its [`PiecewiseLinearForm`].
//!
//! The optional output shift `c` is not part of the networks produced by the
//! step-to-ReLU construction; it defaults to absent.

use rand::Rng;

use crate::io::fmt_f64;
use crate::{Error, Result};

/// Breakpoints closer than this are treated as one.
pub const BREAKPOINT_DEDUP_TOL: f64 = 1e-14;

const FORMAT_TAG: &str = "shallow-generator v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowGenerator {
    dim: usize,
    width: usize,
    w_in: Vec<f64>,
    bias: Vec<f64>,
    /// `dim x width`, row-major.
    w_out: Vec<f64>,
    out_bias: Option<Vec<f64>>,
}

/// Exact affine-by-segment representation of a piecewise-linear generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearForm {
    /// `0 = t_0 < t_1 < ... < t_k = 1`.
    pub boundaries: Vec<f64>,
    /// Per segment: `g(z) = intercepts[s] + slopes[s] * z`.
    pub intercepts: Vec<Vec<f64>>,
    pub slopes: Vec<Vec<f64>>,
}

/// One affine piece `z -> c + v z` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub lo: f64,
    pub hi: f64,
    pub intercept: &'a [f64],
    pub slope: &'a [f64],
}

impl PiecewiseLinearForm {
    pub fn dim(&self) -> usize {
        self.intercepts.first().map_or(0, Vec::len)
    }

    pub fn num_segments(&self) -> usize {
        self.intercepts.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment<'_>> {
        (0..self.num_segments()).map(move |s| Segment {
            lo: self.boundaries[s],
            hi: self.boundaries[s + 1],
            intercept: &self.intercepts[s],
            slope: &self.slopes[s],
        })
    }

    fn segment_index(&self, z: f64) -> usize {
        let k = self.boundaries.partition_point(|&t| t < z);
        k.saturating_sub(1).min(self.num_segments() - 1)
    }

    pub fn eval(&self, z: f64) -> Vec<f64> {
        let s = self.segment_index(z);
        self.intercepts[s]
            .iter()
            .zip(&self.slopes[s])
            .map(|(c, v)| c + v * z)
            .collect()
    }
}

/// Exact `int_0^1 |f(z) - g(z)|^2 dz` over the merged segment partition.
pub fn l2_distance_sq(f: &PiecewiseLinearForm, g: &PiecewiseLinearForm) -> f64 {
    let mut cuts: Vec<f64> = f.boundaries.iter().chain(&g.boundaries).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let len = hi - lo;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let (sf, sg) = (f.segment_index(mid), g.segment_index(mid));
        for i in 0..f.dim() {
            // difference is a + b (z - mid) on this piece
            let b = f.slopes[sf][i] - g.slopes[sg][i];
            let a = f.intercepts[sf][i] - g.intercepts[sg][i] + b * mid;
            total += len * a * a + b * b * len * len * len / 12.0;
        }
    }
    total
}

impl ShallowGenerator {
    /// `w_out` is the `dim x w_in.len()` output matrix in row-major order.
    pub fn new(dim: usize, w_in: Vec<f64>, bias: Vec<f64>, w_out: Vec<f64>) -> Result<Self> {
        let width = w_in.len();
        if dim == 0 || width == 0 {
            return Err(Error::Input("generator needs positive output dimension and width".into()));
        }
        if bias.len() != width || w_out.len() != dim * width {
            return Err(Error::Input(format!(
                "inconsistent shapes: width {width}, {} shifts, {} output weights for dimension {dim}",
                bias.len(),
                w_out.len()
            )));
        }
        let g = Self {
            dim,
            width,
            w_in,
            bias,
            w_out,
            out_bias: None,
        };
        if g.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("generator parameters must be finite".into()));
        }
        Ok(g)
    }

    pub fn zeros(dim: usize, width: usize) -> Self {
        Self {
            dim,
            width,
            w_in: vec![0.0; width],
            bias: vec![0.0; width],
            w_out: vec![0.0; dim * width],
            out_bias: None,
        }
    }

    /// Uniform initialization on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn random_init<R: Rng + ?Sized>(dim: usize, width: usize, rng: &mut R) -> Self {
        let first = 1.0;
        let second = 1.0 / (width as f64).sqrt();
        let mut u = |scale: f64| rng.random_range(-scale..=scale);
        let w_in = (0..width).map(|_| u(first)).collect();
        let bias = (0..width).map(|_| u(first)).collect();
        let w_out = (0..dim * width).map(|_| u(second)).collect();
        Self {
            dim,
            width,
            w_in,
            bias,
            w_out,
            out_bias: None,
        }
    }

    pub fn with_output_bias(mut self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.dim {
            return Err(Error::Input("output bias length must equal the output dimension".into()));
        }
        self.out_bias = Some(c);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn out_bias(&self) -> Option<&[f64]> {
        self.out_bias.as_deref()
    }

    pub fn num_params(&self) -> usize {
        self.width * (self.dim + 2) + self.out_bias.as_ref().map_or(0, Vec::len)
    }

    /// Flat parameters: `w_in`, `b`, `w_out` (row-major), then the output bias if present.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend_from_slice(&self.w_in);
        p.extend_from_slice(&self.bias);
        p.extend_from_slice(&self.w_out);
        if let Some(c) = &self.out_bias {
            p.extend_from_slice(c);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params(), "parameter vector length");
        let (w, rest) = p.split_at(self.width);
        let (b, rest) = rest.split_at(self.width);
        let (o, rest) = rest.split_at(self.width * self.dim);
        self.w_in.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        self.w_out.copy_from_slice(o);
        if let Some(c) = &mut self.out_bias {
            c.copy_from_slice(rest);
        }
    }

    /// Hidden activations `relu(w_in z - b)` written into `h`.
    #[inline]
    pub fn hidden_into(&self, z: f64, h: &mut [f64]) {
        for ((hj, w), b) in h.iter_mut().zip(&self.w_in).zip(&self.bias) {
            *hj = (w * z - b).max(0.0);
        }
    }

    /// Forward pass without the domain check.
    #[inline]
    pub fn eval_into(&self, z: f64, h: &mut [f64], out: &mut [f64]) {
        self.hidden_into(z, h);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.w_out[i * self.width..(i + 1) * self.width];
            let mut acc = self.out_bias.as_ref().map_or(0.0, |c| c[i]);
            for (wij, hj) in row.iter().zip(h.iter()) {
                acc += wij * hj;
            }
            *o = acc;
        }
    }

    pub fn eval(&self, z: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::Domain(format!("latent value {z} outside [0, 1]")));
        }
        let mut h = vec![0.0; self.width];
        let mut out = vec![0.0; self.dim];
        self.eval_into(z, &mut h, &mut out);
        Ok(out)
    }

    /// Kinks of the network inside `(0, 1)`, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .w_in
            .iter()
            .zip(&self.bias)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, b)| b / w)
            .filter(|t| *t > 0.0 && *t < 1.0)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= BREAKPOINT_DEDUP_TOL);
        pts
    }

    pub fn to_piecewise_linear(&self) -> PiecewiseLinearForm {
        let mut boundaries = vec![0.0];
        boundaries.extend(self.breakpoints());
        boundaries.push(1.0);
        let mut intercepts = Vec::with_capacity(boundaries.len() - 1);
        let mut slopes = Vec::with_capacity(boundaries.len() - 1);
        for pair in boundaries.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let mut c = self.out_bias.clone().unwrap_or_else(|| vec![0.0; self.dim]);
            let mut v = vec![0.0; self.dim];
            for j in 0..self.width {
                if self.w_in[j] * mid - self.bias[j] > 0.0 {
                    for i in 0..self.dim {
                        let wij = self.w_out[i * self.width + j];
                        c[i] -= wij * self.bias[j];
                        v[i] += wij * self.w_in[j];
                    }
                }
            }
            intercepts.push(c);
            slopes.push(v);
        }
        PiecewiseLinearForm {
            boundaries,
            intercepts,
            slopes,
        }
    }

    /// `sup_{z in [0,1]} max_i |g_i(z)|`, attained at a breakpoint or an endpoint.
    pub fn sup_norm(&self) -> f64 {
        let mut h = vec![0.0; self.width];
        let mut out = vec![0.0; self.dim];
        let mut best: f64 = 0.0;
        for z in std::iter::once(0.0).chain(self.breakpoints()).chain(std::iter::once(1.0)) {
            self.eval_into(z, &mut h, &mut out);
            best = out.iter().fold(best, |m, v| m.max(v.abs()));
        }
        best
    }

    /// Largest parameter magnitude.
    pub fn max_param_magnitude(&self) -> f64 {
        self.params().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Membership in the class of width-`d1` networks with sup norm at most
    /// `f_bound` and parameters bounded by `m_bound`.
    pub fn in_class(&self, f_bound: f64, m_bound: f64) -> bool {
        self.sup_norm() <= f_bound && self.max_param_magnitude() <= m_bound
    }

    /// Text serialization: a tag line, a `dims d d1 has_bias` line, then one
    /// parameter per line in the order of [`Self::params`].
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{FORMAT_TAG}\ndims {} {} {}\n",
            self.dim,
            self.width,
            u8::from(self.out_bias.is_some())
        );
        for p in self.params() {
            out.push_str(&fmt_f64(p));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let parse_err = |line: usize, reason: &str| Error::Parse {
            line,
            reason: reason.to_string(),
        };
        match lines.next() {
            Some((_, tag)) if tag == FORMAT_TAG => {}
            Some((line, _)) => return Err(parse_err(line, "missing `shallow-generator v1` tag")),
            None => return Err(parse_err(1, "empty generator file")),
        }
        let (line, dims) = lines.next().ok_or_else(|| parse_err(2, "missing dims line"))?;
        let fields: Vec<&str> = dims.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "dims" {
            return Err(parse_err(line, "expected `dims <d> <d1> <has_bias>`"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(line, "dims must be integers"));
        let (dim, width, has_bias) = (num(fields[1])?, num(fields[2])?, num(fields[3])? == 1);
        let mut params = Vec::new();
        for (line, l) in lines {
            params.push(l.parse::<f64>().map_err(|_| parse_err(line, "parameter is not a number"))?);
        }
        let expected = width * (dim + 2) + if has_bias { dim } else { 0 };
        if params.len() != expected {
            return Err(parse_err(
                line,
                &format!("expected {expected} parameters, found {}", params.len()),
            ));
        }
        let mut g = Self::zeros(dim, width);
        if has_bias {
            g.out_bias = Some(vec![0.0; dim]);
        }
        if dim == 0 || width == 0 {
            return Err(parse_err(line, "dimensions must be positive"));
        }
        g.set_params(&params);
        Ok(g)
    }
}

/// Piecewise-constant generator: `(q_{t-1}, q_t]` maps to `values[t-1]`, and
/// `0` maps to the first value.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGenerator {
    cuts: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl StepGenerator {
    pub fn new(cuts: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() || cuts.len() != values.len() + 1 {
            return Err(Error::Input(format!(
                "{} cut points for {} values",
                cuts.len(),
                values.len()
            )));
        }
        if cuts[0] != 0.0 || *cuts.last().unwrap() != 1.0 {
            return Err(Error::Input("cut points must start at 0 and end at 1".into()));
        }
        if cuts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input("cut points must be strictly increasing".into()));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::Input("all step values must share a positive dimension".into()));
        }
        Ok(Self { cuts, values })
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn num_intervals(&self) -> usize {
        self.values.len()
    }

    pub fn interval_lengths(&self) -> Vec<f64> {
        self.cuts.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Value on the interval containing `z`, intervals closed on the right.
    pub fn step_eval(&self, z: f64) -> &[f64] {
        let k = self.cuts.partition_point(|&c| c < z);
        &self.values[k.clamp(1, self.values.len()) - 1]
    }

    pub fn to_piecewise_linear(&self) -> PiecewiseLinearForm {
        PiecewiseLinearForm {
            boundaries: self.cuts.clone(),
            intercepts: self.values.clone(),
            slopes: vec![vec![0.0; self.dim()]; self.values.len()],
        }
    }
}

/// Any piecewise-linear generator the density code can integrate exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Shallow(ShallowGenerator),
    Step(StepGenerator),
}

impl Generator {
    pub fn dim(&self) -> usize {
        match self {
            Generator::Shallow(g) => g.dim(),
            Generator::Step(s) => s.dim(),
        }
    }

    pub fn eval(&self, z: f64) -> Result<Vec<f64>> {
        match self {
            Generator::Shallow(g) => g.eval(z),
            Generator::Step(s) => {
                if !(0.0..=1.0).contains(&z) {
                    return Err(Error::Domain(format!("latent value {z} outside [0, 1]")));
                }
                Ok(s.step_eval(z).to_vec())
            }
        }
    }

    pub fn to_piecewise_linear(&self) -> PiecewiseLinearForm {
        match self {
            Generator::Shallow(g) => g.to_piecewise_linear(),
            Generator::Step(s) => s.to_piecewise_linear(),
        }
    }
}

impl From<ShallowGenerator> for Generator {
    fn from(g: ShallowGenerator) -> Self {
        Generator::Shallow(g)
    }
}

impl From<StepGenerator> for Generator {
    fn from(s: StepGenerator) -> Self {
        Generator::Step(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn single_unit() -> ShallowGenerator {
        ShallowGenerator::new(1, vec![1.0], vec![0.5], vec![2.0]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let zero = ShallowGenerator::zeros(2, 3);
        assert_eq!(zero.eval(0.3).unwrap(), vec![0.0, 0.0]);
        let g = single_unit();
        assert_eq!(g.eval(0.75).unwrap(), vec![0.5]);
        assert_eq!(g.eval(0.25).unwrap(), vec![0.0]);
        assert!(g.eval(1.2).is_err());
        assert!(g.eval(-1e-9).is_err());
    }

    #[test]
    fn eval_is_continuous_at_breakpoints() {
        let g = ShallowGenerator::new(2, vec![1.0, -2.0], vec![0.3, -1.2], vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        for t in g.breakpoints() {
            let at = g.eval(t).unwrap();
            let left = g.eval(t - 1e-12).unwrap();
            let right = g.eval(t + 1e-12).unwrap();
            for i in 0..2 {
                assert!((at[i] - left[i]).abs() < 1e-10 && (at[i] - right[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn breakpoint_examples() {
        assert!(ShallowGenerator::zeros(1, 4).breakpoints().is_empty());
        let g = ShallowGenerator::new(1, vec![1.0, 1.0], vec![0.25, 0.75], vec![1.0, 1.0]).unwrap();
        assert_eq!(g.breakpoints(), vec![0.25, 0.75]);
        let g = ShallowGenerator::new(1, vec![1.0, 2.0], vec![1.5, 1.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(g.breakpoints(), vec![0.5]);
        // duplicates within tolerance collapse
        let g = ShallowGenerator::new(1, vec![1.0, 3.0], vec![0.1, 0.3], vec![1.0, 1.0]).unwrap();
        assert_eq!(g.breakpoints().len(), 1);
    }

    #[test]
    fn piecewise_linear_examples() {
        let form = ShallowGenerator::zeros(1, 2).to_piecewise_linear();
        assert_eq!(form.boundaries, vec![0.0, 1.0]);
        assert_eq!(form.intercepts, vec![vec![0.0]]);
        assert_eq!(form.slopes, vec![vec![0.0]]);
        let form = single_unit().to_piecewise_linear();
        assert_eq!(form.boundaries, vec![0.0, 0.5, 1.0]);
        assert_eq!(form.slopes, vec![vec![0.0], vec![2.0]]);
        assert_eq!(form.intercepts, vec![vec![0.0], vec![-1.0]]);
    }

    #[test]
    fn l2_distance_examples() {
        let zero = ShallowGenerator::zeros(1, 1).to_piecewise_linear();
        let g = single_unit().to_piecewise_linear();
        // int_{1/2}^1 (2 (z - 1/2))^2 dz = 1/6
        assert!((l2_distance_sq(&g, &zero) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(l2_distance_sq(&g, &g), 0.0);
        let a = StepGenerator::new(vec![0.0, 0.3, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let b = StepGenerator::new(vec![0.0, 0.6, 1.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        assert!((l2_distance_sq(&a.to_piecewise_linear(), &b.to_piecewise_linear()) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn sup_norm_examples() {
        assert_eq!(ShallowGenerator::zeros(3, 2).sup_norm(), 0.0);
        assert_eq!(single_unit().sup_norm(), 1.0);
        // interior extremum at a breakpoint
        let tent = ShallowGenerator::new(1, vec![1.0, 1.0], vec![0.0, 0.5], vec![1.0, -2.0]).unwrap();
        assert!((tent.sup_norm() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn class_membership() {
        let g = single_unit();
        assert!(g.in_class(1.0, 2.0));
        assert!(!g.in_class(0.99, 2.0));
        assert!(!g.in_class(1.0, 1.5));
    }

    #[test]
    fn step_eval_half_open_convention() {
        let s = StepGenerator::new(vec![0.0, 0.5, 1.0], vec![vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(s.step_eval(0.0), &[-1.0]);
        assert_eq!(s.step_eval(0.5), &[-1.0]);
        assert_eq!(s.step_eval(0.500001), &[1.0]);
        assert_eq!(s.step_eval(1.0), &[1.0]);
        let c = StepGenerator::new(vec![0.0, 1.0], vec![vec![3.0, 4.0]]).unwrap();
        assert_eq!(c.step_eval(0.0), c.step_eval(0.77));
        assert!(StepGenerator::new(vec![0.0, 0.5, 0.5, 1.0], vec![vec![0.0]; 3]).is_err());
    }

    #[test]
    fn step_pushforward_masses_match_interval_lengths() {
        let s = StepGenerator::new(vec![0.0, 0.2, 0.7, 1.0], vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let mut rng = seeded(11);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let z: f64 = rng.random();
            counts[s.step_eval(z)[0] as usize] += 1;
        }
        for (c, len) in counts.iter().zip(s.interval_lengths()) {
            let se = (len * (1.0 - len) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - len).abs() < 4.0 * se);
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let g = ShallowGenerator::random_init(2, 5, &mut seeded(5));
        assert_eq!(ShallowGenerator::from_text(&g.to_text()).unwrap(), g);
        let gb = g.clone().with_output_bias(vec![0.1, -1.0 / 3.0]).unwrap();
        assert_eq!(ShallowGenerator::from_text(&gb.to_text()).unwrap(), gb);
        assert!(ShallowGenerator::from_text("shallow-generator v1\ndims 1 2 0\n1\n2\n").is_err());
        assert!(ShallowGenerator::from_text("garbage").is_err());
    }

    fn arb_generator() -> impl Strategy<Value = ShallowGenerator> {
        (1usize..3, 1usize..8).prop_flat_map(|(d, w)| {
            (
                proptest::collection::vec(-3.0f64..3.0, w),
                proptest::collection::vec(-2.0f64..2.0, w),
                proptest::collection::vec(-2.0f64..2.0, d * w),
            )
                .prop_map(move |(a, b, o)| ShallowGenerator::new(d, a, b, o).unwrap())
        })
    }

    proptest! {
        #[test]
        fn piecewise_form_reproduces_eval(g in arb_generator()) {
            let form = g.to_piecewise_linear();
            prop_assert!(form.num_segments() <= g.width() + 1);
            for k in 0..=1000 {
                let z = k as f64 / 1000.0;
                let a = g.eval(z).unwrap();
                let b = form.eval(z);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn l2_distance_matches_fine_quadrature(f in arb_generator(), g in arb_generator()) {
            prop_assume!(f.dim() == g.dim());
            let exact = l2_distance_sq(&f.to_piecewise_linear(), &g.to_piecewise_linear());
            // midpoint rule; error is O(h^2) away from kinks and O(h^2) at them
            let n = 20_000;
            let h = 1.0 / n as f64;
            let approx: f64 = (0..n)
                .map(|k| {
                    let z = (k as f64 + 0.5) * h;
                    let (a, b) = (f.eval(z).unwrap(), g.eval(z).unwrap());
                    a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() * h
                })
                .sum();
            prop_assert!((exact - approx).abs() <= 1e-6 * (1.0 + exact), "{} vs {}", exact, approx);
        }

        #[test]
        fn sup_norm_dominates_samples(g in arb_generator(), zs in proptest::collection::vec(0.0f64..=1.0, 50)) {
            let s = g.sup_norm();
            for z in zs {
                for v in g.eval(z).unwrap() {
                    prop_assert!(v.abs() <= s + 1e-12);
                }
            }
        }
    }
}
