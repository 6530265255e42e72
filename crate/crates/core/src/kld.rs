//! Relative entropy between binned distributions and the windowed filter that
//! maps every grid sample to a local divergence from a baseline.
//!
//! For a window PMF `P` with `K` bins and a baseline `Q` with its own binning,
//! the local divergence is
//!
//! ```text
//! D(P‖Q) = Σ_n P_n · log(P_n / Q(φ_n))
//! ```
//!
//! where `Q(φ_n) = q(φ_n)·h` is the baseline mass of the bin containing the
//! representative `φ_n` of window bin `n`. Bins of `P` with zero mass
//! contribute nothing. What happens when `Q(φ_n) = 0` is set by [`Smoothing`].

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{AxialBoundary, GridError, GridMeta, ScanGrid};
use crate::hist::{HistError, Histogram, Pmf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KldError {
    #[error(transparent)]
    Hist(#[from] HistError),
    #[error("distribution contains a non-finite mass")]
    NonFinite,
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Base2,
}

impl LogBase {
    #[inline]
    fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Base2 => std::f64::consts::LOG2_E,
        }
    }
}

/// Treatment of window bins whose baseline mass is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Smoothing {
    /// Drop terms where the baseline mass is zero.
    #[default]
    SkipZeroTerms,
    /// Add `ε` to every baseline bin and renormalise before evaluating.
    AdditiveEpsilon(f64),
    /// Jensen-Shannon divergence against the mixture on unified edges.
    JensenShannon,
    /// No treatment: a zero baseline mass under positive `P` gives +∞.
    Strict,
}

impl Smoothing {
    /// `1 / (10·N)` for a baseline built from `N` samples.
    pub fn default_epsilon(sample_size: u64) -> f64 {
        1.0 / (10.0 * sample_size.max(1) as f64)
    }
}

/// Window and binning parameters of the local filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Axial half-size of the window.
    pub l: usize,
    /// Circumferential half-size of the window.
    pub w: usize,
    /// Bins of the baseline histogram.
    pub k: usize,
    /// Bins of each window histogram.
    pub bins_local: usize,
    pub log_base: LogBase,
    pub smoothing: Smoothing,
    pub boundary: AxialBoundary,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            l: 60,
            w: 1,
            k: 67,
            bins_local: 60,
            log_base: LogBase::Natural,
            smoothing: Smoothing::SkipZeroTerms,
            boundary: AxialBoundary::Shift,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), KldError> {
        if self.k == 0 || self.bins_local == 0 {
            return Err(KldError::InvalidConfig("bin counts must be at least 1".into()));
        }
        if let Smoothing::AdditiveEpsilon(eps) = self.smoothing {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(KldError::InvalidConfig(format!("epsilon must be positive, got {eps}")));
            }
        }
        Ok(())
    }

    pub fn window_cells(&self) -> usize {
        (2 * self.l + 1) * (2 * self.w + 1)
    }
}

/// Per-sample filter output with the same shape as the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KldMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    meta: GridMeta,
    config: FilterConfig,
}

impl KldMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, meta: GridMeta, config: FilterConfig) -> Self {
        assert_eq!(values.len(), rows * cols, "map buffer does not match shape");
        Self {
            rows,
            cols,
            values,
            meta: GridMeta { quantization: 0.0, ..meta },
            config,
        }
    }

    /// Wraps a continuous grid (for example a map read back from disk).
    pub fn from_grid(grid: ScanGrid, config: FilterConfig) -> Self {
        let (rows, cols) = grid.shape();
        let meta = *grid.meta();
        Self::new(rows, cols, grid.into_values(), meta, config)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Cells with a finite negative value. Only possible when window and
    /// baseline bins are misaligned; values are reported, not clamped.
    pub fn negative_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite() && **v < 0.0).count()
    }

    pub fn infinite_cells(&self) -> usize {
        self.values.iter().filter(|v| v.is_infinite()).count()
    }

    /// Same values as a continuous [`ScanGrid`] for serialisation. Fails on
    /// infinite cells, which grids cannot hold.
    pub fn to_grid(&self) -> Result<ScanGrid, GridError> {
        ScanGrid::new(self.rows, self.cols, self.values.clone(), self.meta)
    }
}

/// Relative entropy `D(p‖q)`.
pub fn kl_divergence(p: &Pmf, q: &Pmf, smoothing: Smoothing) -> Result<f64, KldError> {
    kl_divergence_in(p, q, smoothing, LogBase::Natural)
}

/// [`kl_divergence`] in the requested logarithm base.
pub fn kl_divergence_in(p: &Pmf, q: &Pmf, smoothing: Smoothing, base: LogBase) -> Result<f64, KldError> {
    if p.mass().iter().chain(q.mass()).any(|m| !m.is_finite()) {
        return Err(KldError::NonFinite);
    }
    let nats = match smoothing {
        Smoothing::JensenShannon => jensen_shannon(p, q),
        _ => divergence_nats(p, q, smoothing),
    };
    Ok(nats * base.scale())
}

fn divergence_nats(p: &Pmf, q: &Pmf, smoothing: Smoothing) -> f64 {
    let mut total = 0.0;
    let (eps, renorm) = match smoothing {
        Smoothing::AdditiveEpsilon(eps) => (eps, 1.0 + eps * q.bins() as f64),
        _ => (0.0, 1.0),
    };
    for (n, &pm) in p.mass().iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let qm = (q.mass_at(p.representative(n)) + eps) / renorm;
        if qm > 0.0 {
            total += pm * (pm / qm).ln();
        } else if smoothing == Smoothing::Strict {
            return f64::INFINITY;
        }
    }
    total
}

/// Jensen-Shannon divergence on the union of both PMFs' edges, treating each
/// bin as uniform density. A degenerate PMF is a point mass.
fn jensen_shannon(p: &Pmf, q: &Pmf) -> f64 {
    match (p.is_degenerate(), q.is_degenerate()) {
        (true, true) => {
            if p.layout().lo() == q.layout().lo() {
                0.0
            } else {
                std::f64::consts::LN_2
            }
        }
        // a point mass and a continuous density are mutually singular
        (true, false) | (false, true) => std::f64::consts::LN_2,
        (false, false) => {
            let mut edges: Vec<f64> = Vec::with_capacity(p.bins() + q.bins() + 2);
            for pmf in [p, q] {
                let layout = pmf.layout();
                edges.extend((0..=layout.bins()).map(|n| layout.lo() + n as f64 * layout.width()));
            }
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            let mut total = 0.0;
            for pair in edges.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let mid = 0.5 * (a + b);
                let pa = p.lookup_density(mid) * (b - a);
                let qa = q.lookup_density(mid) * (b - a);
                let ma = 0.5 * (pa + qa);
                if pa > 0.0 {
                    total += 0.5 * pa * (pa / ma).ln();
                }
                if qa > 0.0 {
                    total += 0.5 * qa * (qa / ma).ln();
                }
            }
            total
        }
    }
}

/// Shannon entropy of the bin masses, `0·log 0 = 0`.
pub fn shannon_entropy(p: &Pmf, base: LogBase) -> f64 {
    let nats: f64 = p
        .mass()
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| -m * m.ln())
        .sum();
    nats * base.scale()
}

/// Maps every sample to `D(P_ij‖baseline)` where `P_ij` is built from the
/// window around it.
pub fn local_kld_map(grid: &ScanGrid, baseline: &Pmf, config: &FilterConfig) -> Result<KldMap, KldError> {
    config.validate()?;
    let smoothing = config.smoothing;
    let base = config.log_base;
    map_windows(grid, config, |p| kl_divergence_in(p, baseline, smoothing, base))
}

/// Peer filter: Shannon entropy of each windowed PMF.
pub fn local_entropy_map(grid: &ScanGrid, config: &FilterConfig) -> Result<KldMap, KldError> {
    config.validate()?;
    let base = config.log_base;
    map_windows(grid, config, |p| Ok(shannon_entropy(p, base)))
}

/// Evaluates `eval` on the window PMF of every cell.
///
/// Each column is swept axially while a sorted `(value, count)` multiset of
/// the window is updated row by row, so the per-cell cost depends on the
/// number of distinct readings rather than the window area. The histogram it
/// yields is identical to binning the raw window.
fn map_windows<F>(grid: &ScanGrid, config: &FilterConfig, eval: F) -> Result<KldMap, KldError>
where
    F: Fn(&Pmf) -> Result<f64, KldError> + Sync,
{
    let (rows, cols) = grid.shape();
    let columns: Vec<Vec<f64>> = (0..cols)
        .into_par_iter()
        .map(|j| sweep_column(grid, j, config, &eval))
        .collect::<Result<_, _>>()?;
    let mut values = vec![0.0; rows * cols];
    for (j, column) in columns.iter().enumerate() {
        for (i, v) in column.iter().enumerate() {
            values[i * cols + j] = *v;
        }
    }
    Ok(KldMap::new(rows, cols, values, *grid.meta(), *config))
}

fn sweep_column<F>(grid: &ScanGrid, j: usize, config: &FilterConfig, eval: &F) -> Result<Vec<f64>, KldError>
where
    F: Fn(&Pmf) -> Result<f64, KldError>,
{
    let rows = grid.rows();
    let window_cols = grid.window_column_indices(j, config.w);
    let mut window = SortedCounts::default();
    let mut out = Vec::with_capacity(rows);
    // current window rows are lo..hi (exclusive); both ends only move forward
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..rows {
        let (r0, r1) = grid.window_rows(i, config.l, config.boundary);
        while hi <= r1 {
            window.add_row(grid, hi, &window_cols);
            hi += 1;
        }
        while lo < r0 {
            window.remove_row(grid, lo, &window_cols);
            lo += 1;
        }
        let hist = Histogram::from_sorted_counts(&window.entries, config.bins_local)?;
        out.push(eval(&Pmf::from_histogram(hist)?)?);
    }
    Ok(out)
}

#[derive(Debug, Default)]
struct SortedCounts {
    entries: Vec<(f64, u64)>,
}

impl SortedCounts {
    fn add(&mut self, x: f64) {
        match self.entries.binary_search_by(|e| e.0.total_cmp(&x)) {
            Ok(k) => self.entries[k].1 += 1,
            Err(k) => self.entries.insert(k, (x, 1)),
        }
    }

    fn remove(&mut self, x: f64) {
        if let Ok(k) = self.entries.binary_search_by(|e| e.0.total_cmp(&x)) {
            self.entries[k].1 -= 1;
            if self.entries[k].1 == 0 {
                self.entries.remove(k);
            }
        }
    }

    fn add_row(&mut self, grid: &ScanGrid, r: usize, cols: &[usize]) {
        for &c in cols {
            self.add(grid.get(r, c));
        }
    }

    fn remove_row(&mut self, grid: &ScanGrid, r: usize, cols: &[usize]) {
        for &c in cols {
            self.remove(grid.get(r, c));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_bin(mass: [f64; 2]) -> Pmf {
        Pmf::from_masses(0.0, 2.0, mass.to_vec()).unwrap()
    }

    #[test]
    fn identical_pmfs_have_zero_divergence() {
        let p = Pmf::from_sample(&[1.0, 2.0, 2.0, 3.0, 7.5], 4).unwrap();
        assert_eq!(kl_divergence(&p, &p, Smoothing::SkipZeroTerms).unwrap(), 0.0);
        assert_eq!(kl_divergence(&p, &p, Smoothing::Strict).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_against_uniform_is_ln2() {
        let d = kl_divergence(&two_bin([1.0, 0.0]), &two_bin([0.5, 0.5]), Smoothing::SkipZeroTerms).unwrap();
        assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn three_quarters_against_half() {
        let p = two_bin([0.75, 0.25]);
        let q = two_bin([0.5, 0.5]);
        let expected = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        let d = kl_divergence(&p, &q, Smoothing::SkipZeroTerms).unwrap();
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 0.130812).abs() < 1e-6);
        // asymmetry
        let back = kl_divergence(&q, &p, Smoothing::SkipZeroTerms).unwrap();
        assert!((back - d).abs() > 1e-3);
    }

    #[test]
    fn zero_baseline_mass_by_strategy() {
        let p = two_bin([0.5, 0.5]);
        let q = two_bin([1.0, 0.0]);
        let skip = kl_divergence(&p, &q, Smoothing::SkipZeroTerms).unwrap();
        assert!((skip - 0.5 * 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(kl_divergence(&p, &q, Smoothing::Strict).unwrap(), f64::INFINITY);
        let eps = 1e-3;
        let smoothed = kl_divergence(&p, &q, Smoothing::AdditiveEpsilon(eps)).unwrap();
        let q0 = (1.0 + eps) / (1.0 + 2.0 * eps);
        let q1 = eps / (1.0 + 2.0 * eps);
        let expected = 0.5 * (0.5 / q0).ln() + 0.5 * (0.5 / q1).ln();
        assert!((smoothed - expected).abs() < 1e-12);
    }

    #[test]
    fn outside_support_counts_as_zero_mass() {
        let p = Pmf::from_masses(10.0, 12.0, vec![0.5, 0.5]).unwrap();
        let q = two_bin([0.5, 0.5]);
        assert_eq!(kl_divergence(&p, &q, Smoothing::SkipZeroTerms).unwrap(), 0.0);
        assert_eq!(kl_divergence(&p, &q, Smoothing::Strict).unwrap(), f64::INFINITY);
    }

    #[test]
    fn jensen_shannon_is_symmetric_and_bounded() {
        let p = two_bin([0.75, 0.25]);
        let q = two_bin([0.5, 0.5]);
        let a = kl_divergence(&p, &q, Smoothing::JensenShannon).unwrap();
        let b = kl_divergence(&q, &p, Smoothing::JensenShannon).unwrap();
        assert!((a - b).abs() < 1e-15);
        let m: [f64; 2] = [0.625, 0.375];
        let expected = 0.5 * (0.75 * (0.75 / m[0]).ln() + 0.25 * (0.25 / m[1]).ln())
            + 0.5 * (0.5 * (0.5 / m[0]).ln() + 0.5 * (0.5 / m[1]).ln());
        assert!((a - expected).abs() < 1e-12);
        let disjoint = Pmf::from_masses(5.0, 6.0, vec![1.0]).unwrap();
        let js = kl_divergence(&disjoint, &q, Smoothing::JensenShannon).unwrap();
        assert!((js - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pmfs_at_same_value_have_zero_divergence() {
        let p = Pmf::from_sample(&[4.2; 5], 60).unwrap();
        let q = Pmf::from_sample(&[4.2; 9], 67).unwrap();
        assert_eq!(kl_divergence(&p, &q, Smoothing::Strict).unwrap(), 0.0);
    }

    #[test]
    fn entropy_examples() {
        let certain = Pmf::from_masses(0.0, 3.0, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(shannon_entropy(&certain, LogBase::Natural), 0.0);
        let coin = two_bin([0.5, 0.5]);
        assert!((shannon_entropy(&coin, LogBase::Base2) - 1.0).abs() < 1e-15);
        let four = Pmf::from_masses(0.0, 4.0, vec![0.25; 4]).unwrap();
        assert!((shannon_entropy(&four, LogBase::Base2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn base2_rescales_divergence() {
        let d2 = kl_divergence_in(&two_bin([1.0, 0.0]), &two_bin([0.5, 0.5]), Smoothing::SkipZeroTerms, LogBase::Base2)
            .unwrap();
        assert!((d2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = FilterConfig::default();
        assert!(c.validate().is_ok());
        c.smoothing = Smoothing::AdditiveEpsilon(0.0);
        assert!(c.validate().is_err());
        c = FilterConfig { bins_local: 0, ..FilterConfig::default() };
        assert!(c.validate().is_err());
    }

    fn constant_grid() -> ScanGrid {
        ScanGrid::new(20, 12, vec![100.0; 240], GridMeta::default()).unwrap()
    }

    #[test]
    fn constant_grid_maps_to_zero() {
        let g = constant_grid();
        let q = Pmf::from_sample(g.values(), 67).unwrap();
        let cfg = FilterConfig { l: 3, w: 1, ..FilterConfig::default() };
        let map = local_kld_map(&g, &q, &cfg).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
        let ent = local_entropy_map(&g, &cfg).unwrap();
        assert!(ent.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_pmf_uses_clipped_cardinality() {
        let values: Vec<f64> = (0..5 * 3).map(|k| 100.0 + (k % 4) as f64 / 10.0).collect();
        let g = ScanGrid::new(5, 3, values, GridMeta::default()).unwrap();
        let win = g.window_subset(0, 1, 2, 1).unwrap();
        assert_eq!(win.len(), 9);
        let p = Pmf::from_histogram(Histogram::build(&win, 4).unwrap()).unwrap();
        assert_eq!(p.histogram().total(), 9);
    }

    /// Reference path: bin the raw window of every cell.
    fn direct_map(grid: &ScanGrid, baseline: &Pmf, config: &FilterConfig) -> Vec<f64> {
        let (rows, cols) = grid.shape();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let win = grid.window_subset_with(i, j, config.l, config.w, config.boundary).unwrap();
                let p = Pmf::from_sample(&win, config.bins_local).unwrap();
                out.push(kl_divergence(&p, baseline, config.smoothing).unwrap());
            }
        }
        out
    }

    #[test]
    fn sweep_matches_direct_windows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for periodic in [true, false] {
            let (rows, cols) = (23, 9);
            let values: Vec<f64> = (0..rows * cols)
                .map(|_| crate::grid::quantize(100.0 + rng.random_range(-1.0..1.0), 0.1))
                .collect();
            let meta = GridMeta { periodic_circ: periodic, ..GridMeta::default() };
            let g = ScanGrid::new(rows, cols, values, meta).unwrap();
            let q = Pmf::from_sample(g.values(), 13).unwrap();
            for (l, w, boundary) in [
                (0, 0, AxialBoundary::Clip),
                (2, 1, AxialBoundary::Clip),
                (2, 1, AxialBoundary::Shift),
                (5, 3, AxialBoundary::Shift),
                (30, 6, AxialBoundary::Clip),
                (30, 6, AxialBoundary::Shift),
            ] {
                let cfg = FilterConfig { l, w, bins_local: 7, boundary, ..FilterConfig::default() };
                let swept = local_kld_map(&g, &q, &cfg).unwrap();
                let direct = direct_map(&g, &q, &cfg);
                let same = swept.values().iter().zip(&direct).all(|(a, b)| a.to_bits() == b.to_bits());
                assert!(same, "l={l} w={w} periodic={periodic}");
            }
        }
    }

    proptest! {
        #[test]
        fn gibbs_inequality_on_shared_edges(
            raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40),
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let sa: f64 = a.iter().sum();
            let sb: f64 = b.iter().sum();
            prop_assume!(sa > 1e-6 && sb > 1e-6);
            let pm: Vec<f64> = a.iter().map(|x| x / sa).collect();
            let qm: Vec<f64> = b.iter().map(|x| x / sb).collect();
            let fix = |mut v: Vec<f64>| { let s: f64 = v.iter().sum(); v[0] += 1.0 - s; v[0] = v[0].max(0.0); v };
            let p = Pmf::from_masses(0.0, 1.0, fix(pm));
            let q = Pmf::from_masses(0.0, 1.0, fix(qm));
            prop_assume!(p.is_ok() && q.is_ok());
            let (p, q) = (p.unwrap(), q.unwrap());
            let d = kl_divergence(&p, &q, Smoothing::Strict).unwrap();
            prop_assert!(d >= -1e-12);
            prop_assert!(kl_divergence(&p, &p, Smoothing::Strict).unwrap().abs() < 1e-15);
        }
    }
}
