//! Discrete mixing measures and the discretization steps used to turn a
//! Gaussian mixture into something a step generator can represent.
//!
//! A [`DiscreteMeasure`] `H = sum_t w_t delta_{x_t}` convolved with an
//! isotropic Gaussian kernel gives the mixture density `phi_sigma * H`.
//! The three transforms below are applied in order by
//! [`crate::constructor::theorem1_generator`]:
//!
//! 1. [`DiscreteMeasure::quantize_to_grid`] snaps atoms to a lattice of pitch
//!    `spacing` inside the cube `[-half_width, half_width]^d`;
//! 2. [`DiscreteMeasure::merge_small_atoms`] folds atoms lighter than a
//!    threshold into the heaviest atom;
//! 3. [`DiscreteMeasure::extend_partition`] adds light filler atoms so every
//!    cell of a fine partition of the cube carries mass.
//!
//! Each step conserves total mass.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::special::{log_isotropic_normal, log_sum_exp};
use crate::{io, Error, Result};

/// Tolerance on the weight sum accepted from callers; the stored weights are
/// renormalized exactly.
const INPUT_WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// The lattice `spacing * Z^d` restricted to `[-half_width, half_width]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub spacing: f64,
    pub half_width: f64,
    pub dim: usize,
}

impl GridSpec {
    pub fn new(spacing: f64, half_width: f64, dim: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Domain(format!("grid spacing must be positive, got {spacing}")));
        }
        if !(half_width >= spacing && half_width.is_finite()) {
            return Err(Error::Domain(format!(
                "grid half-width {half_width} must be at least the spacing {spacing}"
            )));
        }
        if dim == 0 {
            return Err(Error::Domain("grid dimension must be positive".into()));
        }
        Ok(Self {
            spacing,
            half_width,
            dim,
        })
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|c| c.abs() <= self.half_width)
    }
}

/// Lexicographic order on points; total because coordinates are finite.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl DiscreteMeasure {
    /// Builds a measure, checking positivity, distinctness and that the
    /// weights sum to one (up to `1e-9`, after which they are renormalized).
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Input("a measure needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::Input(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::Input("atoms must have at least one coordinate".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::Input(format!("atom {i} has dimension {} (expected {dim})", a.len())));
            }
            if a.iter().any(|c| !c.is_finite()) {
                return Err(Error::Input(format!("atom {i} has a non-finite coordinate")));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Input(format!("weight {i} must be positive, got {w}")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > INPUT_WEIGHT_SUM_TOL {
            return Err(Error::Input(format!("weights sum to {total}, expected 1")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        let m = Self { dim, atoms, weights };
        m.check_distinct()?;
        Ok(m)
    }

    /// Single unit atom.
    pub fn dirac(atom: Vec<f64>) -> Result<Self> {
        Self::new(vec![atom], vec![1.0])
    }

    fn check_distinct(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.atoms.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&self.atoms[a], &self.atoms[b]));
        for pair in order.windows(2) {
            if self.atoms[pair[0]] == self.atoms[pair[1]] {
                return Err(Error::Input(format!(
                    "atoms {} and {} coincide at {:?}",
                    pair[0], pair[1], self.atoms[pair[0]]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the heaviest atom; ties go to the lexicographically smallest atom.
    pub fn heaviest(&self) -> usize {
        let mut best = 0;
        for i in 1..self.len() {
            let by_weight = self.weights[i].total_cmp(&self.weights[best]);
            if by_weight == Ordering::Greater
                || (by_weight == Ordering::Equal && lex_cmp(&self.atoms[i], &self.atoms[best]) == Ordering::Less)
            {
                best = i;
            }
        }
        best
    }

    /// Snaps every atom to the nearest lattice point (midpoints go toward
    /// `-inf`), clips to the cube and merges atoms landing on the same point.
    pub fn quantize_to_grid(&self, grid: &GridSpec) -> Result<Self> {
        if grid.dim != self.dim {
            return Err(Error::Domain(format!(
                "grid dimension {} does not match measure dimension {}",
                grid.dim, self.dim
            )));
        }
        let max_index = (grid.half_width / grid.spacing).floor() as i64;
        let mut slot: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut atoms: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (i, (atom, &w)) in self.atoms.iter().zip(&self.weights).enumerate() {
            if !grid.contains(atom) {
                return Err(Error::Domain(format!(
                    "atom {i} at {atom:?} lies outside [-{h}, {h}]^{d}",
                    h = grid.half_width,
                    d = grid.dim
                )));
            }
            let key: Vec<i64> = atom
                .iter()
                .map(|&c| {
                    let k = (c / grid.spacing - 0.5).ceil() as i64;
                    k.clamp(-max_index, max_index)
                })
                .collect();
            match slot.get(&key) {
                Some(&j) => weights[j] += w,
                None => {
                    slot.insert(key.clone(), atoms.len());
                    atoms.push(key.iter().map(|&k| k as f64 * grid.spacing).collect());
                    weights.push(w);
                }
            }
        }
        Ok(Self {
            dim: self.dim,
            atoms,
            weights,
        })
    }

    /// Removes atoms lighter than `threshold`, giving their mass to the
    /// heaviest atom. The result is sorted by weight, heaviest first.
    pub fn merge_small_atoms(&self, threshold: f64) -> Result<Self> {
        Ok(self.merge_small_atoms_traced(threshold)?.0)
    }

    /// As [`Self::merge_small_atoms`], also returning the transport cost
    /// `sum_moved w * |x_heaviest - x|^2` of the moved mass.
    pub fn merge_small_atoms_traced(&self, threshold: f64) -> Result<(Self, f64)> {
        if !(threshold > 0.0) {
            return Err(Error::Domain(format!("merge threshold must be positive, got {threshold}")));
        }
        if self.weights.iter().all(|&w| w < threshold) {
            return Err(Error::infeasible(
                "merge",
                format!("every weight is below the threshold {threshold}"),
            ));
        }
        let donor = self.heaviest();
        let mut moved = 0.0;
        let mut cost = 0.0;
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..self.len() {
            if self.weights[i] < threshold {
                moved += self.weights[i];
                cost += self.weights[i] * sq_dist(&self.atoms[i], &self.atoms[donor]);
            } else {
                kept.push(i);
            }
        }
        let mut pairs: Vec<(Vec<f64>, f64)> = kept
            .into_iter()
            .map(|i| {
                let extra = if i == donor { moved } else { 0.0 };
                (self.atoms[i].clone(), self.weights[i] + extra)
            })
            .collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| lex_cmp(&a.0, &b.0)));
        let (atoms, weights) = pairs.into_iter().unzip();
        Ok((
            Self {
                dim: self.dim,
                atoms,
                weights,
            },
            cost,
        ))
    }

    /// Covers the cube with axis-aligned cells of side `diameter_cap / sqrt(d)`
    /// and places a filler atom of weight `filler_weight` at the center of
    /// every cell whose center is farther than `spacing / 3` from all existing
    /// atoms. The fillers' mass is taken from the heaviest atom.
    pub fn extend_partition(&self, grid: &GridSpec, diameter_cap: f64, filler_weight: f64) -> Result<Self> {
        Ok(self.extend_partition_traced(grid, diameter_cap, filler_weight)?.0)
    }

    /// As [`Self::extend_partition`], also returning `sum_fillers w * |x_filler - x_donor|^2`.
    pub fn extend_partition_traced(
        &self,
        grid: &GridSpec,
        diameter_cap: f64,
        filler_weight: f64,
    ) -> Result<(Self, f64)> {
        if grid.dim != self.dim {
            return Err(Error::Domain("grid dimension does not match measure dimension".into()));
        }
        if !(diameter_cap > 0.0) || !(filler_weight > 0.0) {
            return Err(Error::Domain("diameter cap and filler weight must be positive".into()));
        }
        let exclusion_sq = (grid.spacing / 3.0).powi(2);
        let centers = cell_centers(grid.half_width, diameter_cap / (self.dim as f64).sqrt(), self.dim);
        let fillers: Vec<Vec<f64>> = centers
            .into_iter()
            .filter(|c| self.atoms.iter().all(|a| sq_dist(a, c) > exclusion_sq))
            .collect();
        if fillers.is_empty() {
            return Ok((self.clone(), 0.0));
        }
        let donor = self.heaviest();
        let donated = filler_weight * fillers.len() as f64;
        let remaining = self.weights[donor] - donated;
        if remaining < filler_weight {
            return Err(Error::infeasible(
                "extend",
                format!(
                    "{} filler atoms need {donated} of mass but the heaviest atom only has {}",
                    fillers.len(),
                    self.weights[donor]
                ),
            ));
        }
        let cost = fillers
            .iter()
            .map(|c| filler_weight * sq_dist(c, &self.atoms[donor]))
            .sum();
        let mut atoms = self.atoms.clone();
        let mut weights = self.weights.clone();
        weights[donor] = remaining;
        for c in fillers {
            atoms.push(c);
            weights.push(filler_weight);
        }
        Ok((
            Self {
                dim: self.dim,
                atoms,
                weights,
            },
            cost,
        ))
    }

    /// `ln (phi_sigma * H)(x)`.
    pub fn log_mixture_density(&self, sigma: f64, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| w.ln() + log_isotropic_normal(sq_dist(x, a), sigma, self.dim))
            .collect();
        log_sum_exp(&terms)
    }

    /// `(phi_sigma * H)(x) = sum_t w_t phi_sigma(x - x_t)`.
    pub fn mixture_density(&self, sigma: f64, x: &[f64]) -> f64 {
        debug_assert!(sigma > 0.0);
        self.log_mixture_density(sigma, x).exp()
    }

    /// Draws `n` points from `phi_sigma * H`; `sigma = 0` draws atoms.
    pub fn sample<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        let mut cumulative = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let idx = cumulative.partition_point(|&c| c <= u).min(self.len() - 1);
                let mut x = self.atoms[idx].clone();
                if sigma > 0.0 {
                    for c in x.iter_mut() {
                        let e: f64 = rng.sample(StandardNormal);
                        *c += sigma * e;
                    }
                }
                x
            })
            .collect()
    }

    /// Plain-text table: one row per atom, coordinates then weight.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            let mut row: Vec<String> = a.iter().map(|c| io::fmt_f64(*c)).collect();
            row.push(io::fmt_f64(*w));
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let rows = io::parse_rows(text)?;
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                reason: "no atoms".into(),
            });
        }
        let width = rows[0].1.len();
        if width < 2 {
            return Err(Error::Parse {
                line: rows[0].0,
                reason: "each row needs at least one coordinate and a weight".into(),
            });
        }
        let mut atoms = Vec::with_capacity(rows.len());
        let mut weights = Vec::with_capacity(rows.len());
        for (line, mut row) in rows {
            if row.len() != width {
                return Err(Error::Parse {
                    line,
                    reason: format!("expected {width} columns, found {}", row.len()),
                });
            }
            weights.push(row.pop().unwrap());
            atoms.push(row);
        }
        Self::new(atoms, weights)
    }
}

/// Centers of the cells `[-h + k*side, min(-h + (k+1)*side, h)]` covering
/// `[-h, h]^dim`, last axis varying fastest.
fn cell_centers(half_width: f64, side: f64, dim: usize) -> Vec<Vec<f64>> {
    let per_axis = ((2.0 * half_width / side) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let axis: Vec<f64> = (0..per_axis)
        .map(|k| {
            let lo = -half_width + k as f64 * side;
            let hi = (lo + side).min(half_width);
            0.5 * (lo + hi)
        })
        .collect();
    let mut out = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&c| {
                    let mut p = prefix.clone();
                    p.push(c);
                    p
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn m1(atoms: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(atoms.iter().map(|&a| vec![a]).collect(), weights.to_vec()).unwrap()
    }

    /// Nearest lattice multiple by enumeration, ties toward -inf.
    fn nearest_by_enumeration(x: f64, spacing: f64, half_width: f64) -> f64 {
        let k_max = (half_width / spacing).floor() as i64;
        let mut best = f64::NAN;
        let mut best_d = f64::INFINITY;
        for k in -k_max..=k_max {
            let p = k as f64 * spacing;
            let d = (p - x).abs();
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        best
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(DiscreteMeasure::new(vec![], vec![]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0]], vec![0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![0.0]], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn quantize_examples() {
        let grid = GridSpec::new(0.125, 1.0, 1).unwrap();
        assert_eq!(m1(&[0.25], &[1.0]).quantize_to_grid(&grid).unwrap(), m1(&[0.25], &[1.0]));
        let q = m1(&[0.3], &[1.0]).quantize_to_grid(&grid).unwrap();
        assert_eq!(q.atoms(), &[vec![nearest_by_enumeration(0.3, 0.125, 1.0)]]);
        assert_eq!(q.atoms(), &[vec![0.25]]);
        let q = m1(&[0.3, 0.2], &[0.5, 0.5]).quantize_to_grid(&grid).unwrap();
        assert_eq!(q.atoms(), &[vec![0.25]]);
        assert_eq!(q.weights(), &[1.0]);
    }

    #[test]
    fn quantize_midpoint_goes_down() {
        let grid = GridSpec::new(0.5, 2.0, 1).unwrap();
        let q = m1(&[0.25, -0.75], &[0.5, 0.5]).quantize_to_grid(&grid).unwrap();
        assert_eq!(q.atoms(), &[vec![0.0], vec![-1.0]]);
    }

    #[test]
    fn quantize_rejects_atom_outside_cube() {
        let grid = GridSpec::new(0.1, 1.0, 1).unwrap();
        let err = m1(&[0.0, 1.5], &[0.5, 0.5]).quantize_to_grid(&grid).unwrap_err();
        assert!(err.to_string().contains("atom 1"), "{err}");
    }

    #[test]
    fn merge_examples() {
        let m = m1(&[0.0, 1.0, 2.0, 3.0], &[0.5, 0.3, 0.15, 0.05]);
        let merged = m.merge_small_atoms(0.1).unwrap();
        assert_eq!(merged.atoms(), &[vec![0.0], vec![1.0], vec![2.0]]);
        let w = merged.weights();
        assert!((w[0] - 0.55).abs() < 1e-15 && w[1] == 0.3 && w[2] == 0.15);

        let untouched = m.merge_small_atoms(0.01).unwrap();
        assert_eq!(untouched, m);

        let single = m1(&[-1.0, 4.0], &[0.9, 0.1]).merge_small_atoms(0.2).unwrap();
        assert_eq!(single.atoms(), &[vec![-1.0]]);
        assert!((single.weights()[0] - 1.0).abs() < 1e-15);

        assert!(matches!(m.merge_small_atoms(0.9), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn merge_tie_goes_to_lexicographically_first_atom() {
        let m = m1(&[2.0, -1.0, 5.0], &[0.45, 0.45, 0.1]);
        let merged = m.merge_small_atoms(0.2).unwrap();
        assert_eq!(merged.atoms()[0], vec![-1.0]);
        assert!((merged.weights()[0] - 0.55).abs() < 1e-15);
    }

    /// Enumerates unit-side cells of [-1, 1] and keeps those whose center is
    /// not within spacing/3 of the atom.
    #[test]
    fn extend_partition_matches_cell_enumeration() {
        let grid = GridSpec::new(0.1, 1.0, 1).unwrap();
        let m = m1(&[0.0], &[1.0]);
        let out = m.extend_partition(&grid, 1.0, 0.01).unwrap();
        let expected_centers: Vec<f64> = [-1.0f64, 0.0]
            .iter()
            .map(|lo| lo + 0.5)
            .filter(|c| c.abs() > 0.1 / 3.0)
            .collect();
        assert_eq!(expected_centers.len(), 2);
        assert_eq!(out.len(), 3);
        assert_eq!(&out.atoms()[1..], &[vec![-0.5], vec![0.5]]);
        assert!((out.weights()[0] - 0.98).abs() < 1e-15);
        assert!((out.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extend_partition_identity_when_covered() {
        let grid = GridSpec::new(0.1, 0.5, 1).unwrap();
        let m = m1(&[0.0], &[1.0]);
        assert_eq!(m.extend_partition(&grid, 1.0, 0.01).unwrap(), m);
    }

    #[test]
    fn extend_partition_reports_exhausted_donor() {
        let grid = GridSpec::new(0.1, 1.0, 1).unwrap();
        let m = m1(&[0.0], &[1.0]);
        // 20 cells of side 0.1, 19 fillers of weight 0.06 > 1 - 0.06
        assert!(matches!(m.extend_partition(&grid, 0.1, 0.06), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn extend_partition_two_dimensions() {
        let grid = GridSpec::new(0.25, 1.0, 2).unwrap();
        let m = DiscreteMeasure::new(vec![vec![0.5, 0.5], vec![-0.5, -0.5]], vec![0.6, 0.4]).unwrap();
        // side = 1/sqrt(2) -> 3 cells per axis, 9 centers; none coincide with atoms.
        let out = m.extend_partition(&grid, 1.0, 0.01).unwrap();
        assert_eq!(out.len(), 2 + 9);
        assert!((out.weights()[0] - 0.51).abs() < 1e-15);
        for c in &out.atoms()[2..] {
            assert!(c.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn mixture_density_examples() {
        let m = m1(&[0.0], &[1.0]);
        assert!((m.mixture_density(1.0, &[0.0]) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let m = m1(&[-1.3, 1.3], &[0.5, 0.5]);
        assert!((m.mixture_density(1.0, &[0.0]) - 0.171_368_592_047_807_35).abs() < 1e-15);
        let far = m.mixture_density(1.0, &[1e6]);
        assert_eq!(far, 0.0);
        assert!(!m.log_mixture_density(1.0, &[1e6]).is_nan());
    }

    #[test]
    fn sampling_examples() {
        let m = DiscreteMeasure::dirac(vec![1.5, -2.0]).unwrap();
        let xs = m.sample(0.0, &mut seeded(1), 50);
        assert!(xs.iter().all(|x| x == &vec![1.5, -2.0]));

        let m = m1(&[0.0, 1.0, 2.0], &[0.2, 0.3, 0.5]);
        let n = 100_000;
        let xs = m.sample(0.0, &mut seeded(7), n);
        for (k, &w) in m.weights().iter().enumerate() {
            let freq = xs.iter().filter(|x| x[0] == k as f64).count() as f64 / n as f64;
            let se = (w * (1.0 - w) / n as f64).sqrt();
            assert!((freq - w).abs() < 4.0 * se, "atom {k}: {freq} vs {w}");
        }
        assert_eq!(m.sample(0.7, &mut seeded(3), 10), m.sample(0.7, &mut seeded(3), 10));
    }

    #[test]
    fn table_round_trip() {
        let m = DiscreteMeasure::new(vec![vec![0.1, -3.0], vec![1.0 / 3.0, 2.5e-9]], vec![0.7, 0.3]).unwrap();
        let back = DiscreteMeasure::from_table(&m.to_table()).unwrap();
        assert_eq!(back, m);
        assert!(DiscreteMeasure::from_table("1 2 0.5\n3 0.5\n").is_err());
    }

    fn arb_measure() -> impl Strategy<Value = DiscreteMeasure> {
        (1usize..3, 1usize..12).prop_flat_map(|(d, n)| {
            (
                proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, d), n),
                proptest::collection::vec(0.01f64..1.0, n),
            )
                .prop_filter_map("distinct atoms", |(atoms, raw)| {
                    let s: f64 = raw.iter().sum();
                    DiscreteMeasure::new(atoms, raw.iter().map(|w| w / s).collect()).ok()
                })
        })
    }

    proptest! {
        #[test]
        fn operations_conserve_mass(m in arb_measure(), thr in 0.0f64..0.3) {
            let grid = GridSpec::new(0.125, 2.0, m.dim()).unwrap();
            let q = m.quantize_to_grid(&grid).unwrap();
            prop_assert!((q.total_weight() - 1.0).abs() <= 1e-12);
            if let Ok(merged) = q.merge_small_atoms(thr.max(1e-9)) {
                prop_assert!((merged.total_weight() - 1.0).abs() <= 1e-12);
                let max_before = q.weights().iter().cloned().fold(0.0, f64::max);
                prop_assert!(merged.weights()[0] >= max_before);
                if let Ok(ext) = merged.extend_partition(&grid, 1.0, 1e-3) {
                    prop_assert!((ext.total_weight() - 1.0).abs() <= 1e-12);
                    prop_assert!(ext.weights().iter().all(|&w| w >= 1e-3 || w >= thr));
                }
            }
        }

        #[test]
        fn quantize_moves_atoms_at_most_half_diagonal(m in arb_measure()) {
            // half-width is a lattice multiple so clipping never adds displacement
            let spacing = 0.125;
            let grid = GridSpec::new(spacing, 2.0, m.dim()).unwrap();
            let q = m.quantize_to_grid(&grid).unwrap();
            let bound = (m.dim() as f64).sqrt() / 2.0 * spacing + 1e-15;
            for a in m.atoms() {
                let nearest = q.atoms().iter().map(|b| sq_dist(a, b).sqrt()).fold(f64::INFINITY, f64::min);
                prop_assert!(nearest <= bound);
            }
            for b in q.atoms() {
                for c in b {
                    let k = c / spacing;
                    prop_assert_eq!(k, k.round());
                }
            }
        }

        /// Moving mass `w` from `x` to `x'` costs at most `w |x - x'|^2 / (8 sigma^2)`
        /// in squared Hellinger distance.
        #[test]
        fn merging_respects_perturbation_bound(m in arb_measure(), thr in 0.02f64..0.3, sigma in 0.2f64..2.0) {
            prop_assume!(m.dim() == 1);
            if let Ok((merged, cost)) = m.merge_small_atoms_traced(thr) {
                let grid = crate::metrics::QuadratureGrid::cube(1, -2.0 - 8.0 * sigma, 2.0 + 8.0 * sigma, 2001).unwrap();
                let h2 = crate::metrics::hellinger_sq_quadrature(
                    |x| m.mixture_density(sigma, x),
                    |x| merged.mixture_density(sigma, x),
                    &grid,
                ).unwrap();
                prop_assert!(h2 <= cost / (8.0 * sigma * sigma) + 1e-6, "{} vs {}", h2, cost);
            }
        }
    }
}
