//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use kld_filter::grid::ScanGrid;

/// Samples of the `(2l+1)x(2w+1)` window at `(i, j)`, gathered directly:
/// rows slide inward at the scan ends, columns wrap.
pub fn window(grid: &ScanGrid, i: usize, j: usize, l: usize, w: usize) -> Vec<f64> {
    let (rows, cols) = grid.shape();
    let height = (2 * l + 1).min(rows);
    let top = i.saturating_sub(l).min(rows - height);
    let mut out = Vec::new();
    for r in top..top + height {
        for dj in 0..=2 * w {
            let c = (j + cols - w + dj) % cols;
            out.push(grid.get(r, c));
        }
    }
    out
}

/// Equal-width `k`-bin baseline counted straight from the data.
pub struct Baseline {
    lo: f64,
    h: f64,
    counts: Vec<usize>,
    total: f64,
}

impl Baseline {
    pub fn new(all: &[f64], k: usize) -> Self {
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut b = Self {
            lo,
            h: (hi - lo) / k as f64,
            counts: vec![0; k],
            total: all.len() as f64,
        };
        for &v in all {
            let n = b.bin(v);
            b.counts[n] += 1;
        }
        b
    }

    fn bin(&self, v: f64) -> usize {
        let t = (v - self.lo) / self.h;
        // values a hair below an edge belong above it
        let n = (t + 1e-9).floor() as i64;
        n.clamp(0, self.counts.len() as i64 - 1) as usize
    }

    /// Mass of the bin containing `x`.
    pub fn mass(&self, x: f64) -> f64 {
        self.counts[self.bin(x)] as f64 / self.total
    }
}

/// `Σ_v (c_v/N) ln((c_v/N) / Q(v))` over the distinct values of the window,
/// skipping values the baseline does not cover.
pub fn unbinned_kld(sample: &[f64], baseline: &Baseline) -> f64 {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for v in sample {
        *counts.entry(v.to_bits()).or_default() += 1;
    }
    let n = sample.len() as f64;
    counts
        .into_iter()
        .map(|(bits, c)| {
            let p = c as f64 / n;
            let q = baseline.mass(f64::from_bits(bits));
            if q > 0.0 {
                p * (p / q).ln()
            } else {
                0.0
            }
        })
        .sum()
}
