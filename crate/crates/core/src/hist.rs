//! Equal-width histograms and the probability mass functions built from them.
//!
//! Bins are `[lo + n·h, lo + (n+1)·h)` with the last bin closed on the right so
//! that the sample maximum is counted. A sample whose values are all equal
//! produces a degenerate layout (`h = 0`) with every count in bin 0.

use thiserror::Error;

/// Relative slack applied when a value sits on a bin edge up to rounding
/// error; such values go to the upper bin.
const EDGE_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistError {
    #[error("cannot build a histogram from an empty sample")]
    EmptySample,
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("histogram has no counts")]
    NoCounts,
    #[error("invalid bin layout: lo={lo}, hi={hi}")]
    InvalidLayout { lo: f64, hi: f64 },
    #[error("masses must be non-negative and sum to 1 (sum = {sum})")]
    InvalidMass { sum: f64 },
    #[error("value {value} lies outside the bin layout [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("expected {expected} masses, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Edges of an equal-width binning of `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinLayout {
    lo: f64,
    hi: f64,
    bins: usize,
}

impl BinLayout {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self, HistError> {
        if bins == 0 {
            return Err(HistError::ZeroBins);
        }
        if !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(HistError::InvalidLayout { lo, hi });
        }
        Ok(Self { lo, hi, bins })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// `(hi - lo) / bins`; zero for a degenerate layout.
    pub fn width(&self) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (self.hi - self.lo) / self.bins as f64
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi == self.lo
    }

    pub fn midpoint(&self, n: usize) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            self.lo + (n as f64 + 0.5) * self.width()
        }
    }

    /// Index of the bin holding `x`, or `None` outside `[lo, hi]`.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let slack = EDGE_GUARD * self.lo.abs().max(self.hi.abs()).max(1.0);
        if x.is_nan() || x < self.lo - slack || x > self.hi + slack {
            return None;
        }
        if self.is_degenerate() {
            return Some(0);
        }
        Some(self.bin_of_in_range(x))
    }

    #[inline]
    fn bin_of_in_range(&self, x: f64) -> usize {
        let t = (x - self.lo) / self.width();
        let nearest = t.round();
        let idx = if (t - nearest).abs() <= EDGE_GUARD * nearest.abs().max(1.0) {
            nearest
        } else {
            t.floor()
        };
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.bins - 1)
        }
    }
}

/// Bin counts over a [`BinLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    layout: BinLayout,
    counts: Vec<u64>,
    /// Smallest sample that landed in each bin; NaN for empty bins or when
    /// the histogram was built from counts alone.
    members: Vec<f64>,
}

impl Histogram {
    /// Bins `sample` into `bins` equal-width bins spanning its min and max.
    pub fn build(sample: &[f64], bins: usize) -> Result<Self, HistError> {
        if bins == 0 {
            return Err(HistError::ZeroBins);
        }
        if sample.is_empty() {
            return Err(HistError::EmptySample);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in sample {
            if !x.is_finite() {
                return Err(HistError::NonFinite);
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let layout = BinLayout::new(lo, hi, bins)?;
        let mut counts = vec![0u64; bins];
        let mut members = vec![f64::NAN; bins];
        if layout.is_degenerate() {
            counts[0] = sample.len() as u64;
            members[0] = lo;
        } else {
            for &x in sample {
                let n = layout.bin_of_in_range(x);
                counts[n] += 1;
                // NaN compares false, so the first member always lands
                if !(members[n] <= x) {
                    members[n] = x;
                }
            }
        }
        Ok(Self {
            layout,
            counts,
            members,
        })
    }

    /// Histogram of a multiset given as `(value, multiplicity)` pairs sorted by
    /// ascending value. Produces exactly what [`build`](Self::build) produces
    /// for the expanded sample.
    pub fn from_sorted_counts(entries: &[(f64, u64)], bins: usize) -> Result<Self, HistError> {
        if bins == 0 {
            return Err(HistError::ZeroBins);
        }
        let (Some(first), Some(last)) = (entries.first(), entries.last()) else {
            return Err(HistError::EmptySample);
        };
        if entries.iter().any(|(v, _)| !v.is_finite()) {
            return Err(HistError::NonFinite);
        }
        let layout = BinLayout::new(first.0, last.0, bins)?;
        let mut counts = vec![0u64; bins];
        let mut members = vec![f64::NAN; bins];
        if layout.is_degenerate() {
            counts[0] = entries.iter().map(|(_, c)| c).sum();
            members[0] = first.0;
        } else {
            for &(v, c) in entries {
                let n = layout.bin_of_in_range(v);
                if counts[n] == 0 {
                    members[n] = v;
                }
                counts[n] += c;
            }
        }
        Ok(Self {
            layout,
            counts,
            members,
        })
    }

    /// Bins `sample` into a caller-chosen layout, e.g. to put two data sets
    /// on the same axis. Every value must lie within the layout.
    pub fn build_on(sample: &[f64], layout: BinLayout) -> Result<Self, HistError> {
        if sample.is_empty() {
            return Err(HistError::EmptySample);
        }
        let mut counts = vec![0u64; layout.bins];
        let mut members = vec![f64::NAN; layout.bins];
        for &x in sample {
            if !x.is_finite() {
                return Err(HistError::NonFinite);
            }
            let n = layout.bin_of(x).ok_or(HistError::OutOfRange {
                value: x,
                lo: layout.lo,
                hi: layout.hi,
            })?;
            counts[n] += 1;
            if !(members[n] <= x) {
                members[n] = x;
            }
        }
        Ok(Self {
            layout,
            counts,
            members,
        })
    }

    /// Histogram from explicit counts; representatives fall back to midpoints.
    pub fn from_counts(lo: f64, hi: f64, counts: Vec<u64>) -> Result<Self, HistError> {
        let layout = BinLayout::new(lo, hi, counts.len())?;
        let members = vec![f64::NAN; counts.len()];
        Ok(Self {
            layout,
            counts,
            members,
        })
    }

    pub fn layout(&self) -> &BinLayout {
        &self.layout
    }

    pub fn lo(&self) -> f64 {
        self.layout.lo
    }

    pub fn hi(&self) -> f64 {
        self.layout.hi
    }

    pub fn bin_width(&self) -> f64 {
        self.layout.width()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_degenerate(&self) -> bool {
        self.layout.is_degenerate()
    }

    /// Point at which other distributions are evaluated for bin `n`: the
    /// smallest sample in the bin when known, else the bin midpoint.
    pub fn representative(&self, n: usize) -> f64 {
        let m = self.members[n];
        if m.is_nan() {
            self.layout.midpoint(n)
        } else {
            m
        }
    }
}

/// Normalised histogram: per-bin masses and densities (mass / bin width).
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    hist: Histogram,
    mass: Vec<f64>,
    density: Vec<f64>,
}

impl Pmf {
    pub fn from_histogram(hist: Histogram) -> Result<Self, HistError> {
        let total = hist.total();
        if total == 0 {
            return Err(HistError::NoCounts);
        }
        let inv = 1.0 / total as f64;
        let mass: Vec<f64> = hist.counts.iter().map(|&c| c as f64 * inv).collect();
        let density = densities(&hist.layout, &mass);
        Ok(Self {
            hist,
            mass,
            density,
        })
    }

    /// Builds a PMF directly from masses over `[lo, hi]`.
    pub fn from_masses(lo: f64, hi: f64, mass: Vec<f64>) -> Result<Self, HistError> {
        let sum: f64 = mass.iter().sum();
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(HistError::InvalidMass { sum });
        }
        let layout = BinLayout::new(lo, hi, mass.len())?;
        let hist = Histogram {
            layout,
            counts: vec![0; mass.len()],
            members: vec![f64::NAN; mass.len()],
        };
        let density = densities(&layout, &mass);
        Ok(Self {
            hist,
            mass,
            density,
        })
    }

    /// Convenience: histogram plus normalisation in one step.
    pub fn from_sample(sample: &[f64], bins: usize) -> Result<Self, HistError> {
        Self::from_histogram(Histogram::build(sample, bins)?)
    }

    /// PMF of `sample` over a fixed layout.
    pub fn from_sample_on(sample: &[f64], layout: BinLayout) -> Result<Self, HistError> {
        Self::from_histogram(Histogram::build_on(sample, layout)?)
    }

    pub fn histogram(&self) -> &Histogram {
        &self.hist
    }

    pub fn layout(&self) -> &BinLayout {
        &self.hist.layout
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Probability per millimetre. A degenerate PMF has infinite density in
    /// bin 0.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn is_degenerate(&self) -> bool {
        self.hist.is_degenerate()
    }

    pub fn bin_width(&self) -> f64 {
        self.hist.bin_width()
    }

    pub fn representative(&self, n: usize) -> f64 {
        self.hist.representative(n)
    }

    /// Density of the bin containing `x`; 0 outside the support.
    pub fn lookup_density(&self, x: f64) -> f64 {
        self.hist.layout.bin_of(x).map_or(0.0, |n| self.density[n])
    }

    /// Mass of the bin containing `x` (`q(x)·h`); 0 outside the support.
    pub fn mass_at(&self, x: f64) -> f64 {
        self.hist.layout.bin_of(x).map_or(0.0, |n| self.mass[n])
    }

    /// Number of samples behind this PMF, if it came from a histogram.
    pub fn sample_size(&self) -> Option<u64> {
        match self.hist.total() {
            0 => None,
            n => Some(n),
        }
    }
}

fn densities(layout: &BinLayout, mass: &[f64]) -> Vec<f64> {
    if layout.is_degenerate() {
        let mut d = vec![0.0; mass.len()];
        if mass[0] > 0.0 {
            d[0] = f64::INFINITY;
        }
        d
    } else {
        let h = layout.width();
        mass.iter().map(|m| m / h).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_values_two_bins() {
        let h = Histogram::build(&[0.0, 1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(h.lo(), 0.0);
        assert_eq!(h.hi(), 3.0);
        assert_eq!(h.bin_width(), 1.5);
        assert_eq!(h.counts(), &[2, 2]);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let h = Histogram::build(&[5.0, 5.0, 5.0], 4).unwrap();
        assert!(h.is_degenerate());
        assert_eq!(h.counts(), &[3, 0, 0, 0]);
        assert_eq!(h.bin_width(), 0.0);
        let p = Pmf::from_histogram(h).unwrap();
        assert_eq!(p.mass(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.mass_at(5.0), 1.0);
        assert_eq!(p.mass_at(5.1), 0.0);
    }

    #[test]
    fn build_errors() {
        assert_eq!(Histogram::build(&[], 3), Err(HistError::EmptySample));
        assert_eq!(Histogram::build(&[1.0], 0), Err(HistError::ZeroBins));
        assert_eq!(Histogram::build(&[1.0, f64::NAN], 2), Err(HistError::NonFinite));
        let empty = Histogram::from_counts(0.0, 1.0, vec![0, 0]).unwrap();
        assert_eq!(Pmf::from_histogram(empty), Err(HistError::NoCounts));
    }

    #[test]
    fn fixed_layout_binning() {
        let layout = BinLayout::new(0.0, 4.0, 4).unwrap();
        let h = Histogram::build_on(&[0.5, 1.0, 3.9, 4.0], layout).unwrap();
        assert_eq!(h.counts(), &[1, 1, 0, 2]);
        assert!(matches!(
            Histogram::build_on(&[5.0], layout),
            Err(HistError::OutOfRange { .. })
        ));
        // same layout as the data range reproduces `build`
        let xs = [1.0, 1.3, 2.2, 2.9, 3.0];
        let own = Histogram::build(&xs, 3).unwrap();
        assert_eq!(Histogram::build_on(&xs, *own.layout()).unwrap(), own);
    }

    #[test]
    fn masses_from_counts() {
        let p = Pmf::from_histogram(Histogram::from_counts(0.0, 4.0, vec![2, 2]).unwrap()).unwrap();
        assert_eq!(p.mass(), &[0.5, 0.5]);
        let p = Pmf::from_histogram(Histogram::from_counts(0.0, 4.0, vec![4, 0]).unwrap()).unwrap();
        assert_eq!(p.mass(), &[1.0, 0.0]);
    }

    #[test]
    fn densities_divide_by_width() {
        let p = Pmf::from_histogram(Histogram::from_counts(0.0, 6.0, vec![1, 2, 1]).unwrap()).unwrap();
        assert_eq!(p.bin_width(), 2.0);
        assert_eq!(p.density(), &[0.125, 0.25, 0.125]);
    }

    #[test]
    fn lookup_at_support_edges() {
        let p = Pmf::from_histogram(Histogram::from_counts(0.0, 6.0, vec![1, 2, 1]).unwrap()).unwrap();
        assert_eq!(p.lookup_density(0.0), p.density()[0]);
        assert_eq!(p.lookup_density(6.0), p.density()[2]);
        assert_eq!(p.lookup_density(7.0), 0.0);
        assert_eq!(p.lookup_density(-0.5), 0.0);
    }

    #[test]
    fn values_on_interior_edges_go_up() {
        // width 2/60: every multiple of 0.1 starting at lo sits on an edge
        let sample: Vec<f64> = (0..=20).map(|k| 99.0 + k as f64 / 10.0).collect();
        let h = Histogram::build(&sample, 60).unwrap();
        for (k, &x) in sample.iter().enumerate() {
            let n = h.layout().bin_of(x).unwrap();
            assert_eq!(n, (3 * k).min(59), "value {x}");
        }
        assert_eq!(h.counts().iter().filter(|&&c| c > 0).count(), 21);
    }

    #[test]
    fn representative_is_a_member() {
        let h = Histogram::build(&[1.0, 1.2, 1.25, 3.0], 4).unwrap();
        assert_eq!(h.representative(0), 1.0);
        // bin 1 is empty: midpoint
        assert_eq!(h.representative(1), 1.0 + 1.5 * 0.5);
    }

    proptest! {
        #[test]
        fn sorted_counts_match_direct_build(ints in prop::collection::vec(0i32..40, 1..200), bins in 1usize..70) {
            let sample: Vec<f64> = ints.iter().map(|&v| 99.0 + v as f64 / 10.0).collect();
            let mut entries: Vec<(f64, u64)> = Vec::new();
            let mut sorted = sample.clone();
            sorted.sort_by(f64::total_cmp);
            for v in sorted {
                match entries.last_mut() {
                    Some(e) if e.0 == v => e.1 += 1,
                    _ => entries.push((v, 1)),
                }
            }
            let direct = Histogram::build(&sample, bins).unwrap();
            let grouped = Histogram::from_sorted_counts(&entries, bins).unwrap();
            prop_assert_eq!(direct.counts(), grouped.counts());
            for n in 0..bins {
                prop_assert_eq!(direct.representative(n).to_bits(), grouped.representative(n).to_bits());
            }
        }

        #[test]
        fn normalisation_holds(sample in prop::collection::vec(-50.0f64..50.0, 1..300), bins in 1usize..80) {
            let p = Pmf::from_sample(&sample, bins).unwrap();
            let total: f64 = p.mass().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert_eq!(p.histogram().total(), sample.len() as u64);
            if !p.is_degenerate() {
                let via_density: f64 = p.density().iter().map(|d| d * p.bin_width()).sum();
                prop_assert!((via_density - 1.0).abs() < 1e-12);
                for (d, m) in p.density().iter().zip(p.mass()) {
                    prop_assert!((d * p.bin_width() - m).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn merging_pairs_of_bins_matches_coarse_histogram(
            ints in prop::collection::vec(0i32..200, 2..300),
            m in 1usize..20,
        ) {
            let sample: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
            let fine = Histogram::build(&sample, 2 * m).unwrap();
            let coarse = Histogram::build(&sample, m).unwrap();
            let merged: Vec<u64> = fine.counts().chunks(2).map(|c| c.iter().sum()).collect();
            if fine.is_degenerate() {
                prop_assert_eq!(fine.total(), coarse.total());
            } else {
                prop_assert_eq!(merged.as_slice(), coarse.counts());
            }
        }

        #[test]
        fn lookup_is_piecewise_constant(sample in prop::collection::vec(0.0f64..10.0, 2..100), bins in 1usize..30) {
            let p = Pmf::from_sample(&sample, bins).unwrap();
            for &x in &sample {
                let n = p.layout().bin_of(x).unwrap();
                prop_assert_eq!(p.mass_at(x), p.mass()[n]);
                prop_assert_eq!(p.mass_at(p.representative(n)), p.mass()[n]);
            }
        }
    }
}
