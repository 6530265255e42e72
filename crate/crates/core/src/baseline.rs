//! Baseline distributions and the error made by using the whole data set as
//! the baseline instead of a noise-only reference.
//!
//! With `Q_A` the baseline built from all samples and `Q_N` one built from
//! anomaly-free data, the local divergence splits as
//!
//! ```text
//! D(P‖Q_A) = D(P‖Q_N) + δ_A,    δ_A = Σ P(φ) log(Q_N(φ) / Q_A(φ))
//! ```
//!
//! Terms where `Q_N(φ) = 0` are dropped from both `δ_A` and `D(P‖Q_N)`, so the
//! identity only holds exactly when nothing is dropped. `Q_A` and `Q_N` must
//! share one bin layout; otherwise the ratio of their masses picks up the
//! ratio of their bin widths.

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{GridError, ScanGrid};
use crate::hist::{BinLayout, HistError, Pmf};
use crate::kld::{kl_divergence, KldError, Smoothing};
use crate::synth::{generate_scan, HoleSpec, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Hist(#[from] HistError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Kld(#[from] KldError),
    #[error("baselines must share one bin layout")]
    AxisMismatch,
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

/// `Q_A`: the PMF of every reading in the scan.
pub fn baseline_from_all(grid: &ScanGrid, k: usize) -> Result<Pmf, BaselineError> {
    Ok(Pmf::from_sample(grid.values(), k)?)
}

/// `Q_N`: the PMF of a scan known to contain only noise. Readings of other
/// scans may fall outside its support.
pub fn baseline_from_noise(noise_grid: &ScanGrid, k: usize) -> Result<Pmf, BaselineError> {
    Ok(Pmf::from_sample(noise_grid.values(), k)?)
}

/// Builds `Q_A` and `Q_N` on one layout spanning both scans.
pub fn shared_baselines(all: &ScanGrid, noise: &ScanGrid, k: usize) -> Result<(Pmf, Pmf), BaselineError> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in all.values().iter().chain(noise.values()) {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let layout = BinLayout::new(lo, hi, k)?;
    Ok((
        Pmf::from_sample_on(all.values(), layout)?,
        Pmf::from_sample_on(noise.values(), layout)?,
    ))
}

/// Outcome of comparing the two baselines on one probe distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// Share of anomaly samples in the data set, when known.
    pub anomaly_fraction: Option<f64>,
    pub delta_a: f64,
    pub d_kl_qa: f64,
    pub d_kl_qn: f64,
    /// `δ_A / D(P‖Q_A)`; `None` when `D(P‖Q_A) = 0`.
    pub relative_sensitivity: Option<f64>,
    pub probe_description: String,
    /// Probe bins skipped because `Q_N` is zero there.
    pub dropped_terms: usize,
    /// Probe mass carried by the dropped bins.
    pub dropped_mass: f64,
}

impl SensitivityReport {
    /// `D(P‖Q_A) - D(P‖Q_N) - δ_A`: the part of the divergence carried by the
    /// dropped terms (zero up to rounding when none were dropped).
    pub fn dropped_contribution(&self) -> f64 {
        self.d_kl_qa - self.d_kl_qn - self.delta_a
    }
}

/// Computes `δ_A` for probe `p` against `Q_A` and `Q_N`.
///
/// Each probe bin is evaluated at its representative. Bins where `Q_N` or
/// `Q_A` is zero contribute nothing to `δ_A` or to `D(P‖Q_N)`.
pub fn sensitivity_delta(p: &Pmf, q_a: &Pmf, q_n: &Pmf) -> Result<SensitivityReport, BaselineError> {
    if q_a.layout() != q_n.layout() {
        return Err(BaselineError::AxisMismatch);
    }
    let mut delta_a = 0.0;
    let mut dropped_terms = 0;
    let mut dropped_mass = 0.0;
    for (n, &pm) in p.mass().iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let x = p.representative(n);
        let (qa, qn) = (q_a.mass_at(x), q_n.mass_at(x));
        if qa > 0.0 && qn > 0.0 {
            delta_a += pm * (qn / qa).ln();
        } else {
            dropped_terms += 1;
            dropped_mass += pm;
        }
    }
    let d_kl_qa = kl_divergence(p, q_a, Smoothing::SkipZeroTerms)?;
    let d_kl_qn = kl_divergence(p, q_n, Smoothing::SkipZeroTerms)?;
    let relative_sensitivity = (d_kl_qa > 0.0).then(|| delta_a / d_kl_qa);
    Ok(SensitivityReport {
        anomaly_fraction: None,
        delta_a,
        d_kl_qa,
        d_kl_qn,
        relative_sensitivity,
        probe_description: String::new(),
        dropped_terms,
        dropped_mass,
    })
}

/// The fixed window whose PMF is held constant across a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub row: usize,
    pub col: usize,
    pub l: usize,
    pub w: usize,
    /// Bins of the probe PMF.
    pub bins: usize,
}

impl ProbeSpec {
    /// Picks a window next to the rim of the largest, deepest hole so that
    /// as close as possible to half of its cells lie inside the hole. Among
    /// equally balanced windows the largest wins, then the smallest offset.
    pub fn half_noise(config: &SynthConfig, bins: usize) -> Result<Self, BaselineError> {
        let (k, hole) = config
            .holes
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                (a.depth.abs(), a.diameter)
                    .partial_cmp(&(b.depth.abs(), b.diameter))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or_else(|| BaselineError::InvalidSweep("layout has no holes to probe".into()))?;
        let cells = config.hole_cells(k);
        let (rows, cols) = (config.rows(), config.cols());
        let row0 = (hole.center_axial / config.sensor.axial_pitch).round() as usize;
        let col0 = (hole.center_circ / config.sensor.circ_pitch).round() as usize % cols;
        let reach = (hole.diameter / config.sensor.axial_pitch).ceil() as usize;

        let mut best: Option<(f64, usize, usize, ProbeSpec)> = None;
        for w in 0..=2usize {
            for l in 2..=40usize {
                for offset in 0..=l + reach {
                    let row = row0 + offset;
                    if row < l || row + l >= rows || 2 * w + 1 > cols {
                        continue;
                    }
                    let inside = cells
                        .iter()
                        .filter(|&&(i, j)| {
                            let dj = (j as i64 - col0 as i64).rem_euclid(cols as i64);
                            let dj = dj.min(cols as i64 - dj) as usize;
                            i + l >= row && i <= row + l && dj <= w
                        })
                        .count();
                    let area = (2 * l + 1) * (2 * w + 1);
                    let miss = (inside as f64 / area as f64 - 0.5).abs();
                    let spec = ProbeSpec {
                        row,
                        col: col0,
                        l,
                        w,
                        bins,
                    };
                    let better = match &best {
                        None => true,
                        Some((m, a, o, _)) => {
                            miss < m - 1e-12 || ((miss - m).abs() <= 1e-12 && (area > *a || (area == *a && offset < *o)))
                        }
                    };
                    if better {
                        best = Some((miss, area, offset, spec));
                    }
                }
            }
        }
        best.map(|b| b.3)
            .ok_or_else(|| BaselineError::InvalidSweep("no probe window fits the scan".into()))
    }

    pub fn window(&self, grid: &ScanGrid) -> Result<Vec<f64>, BaselineError> {
        Ok(grid.window_subset(self.row, self.col, self.l, self.w)?)
    }

    pub fn pmf(&self, grid: &ScanGrid) -> Result<Pmf, BaselineError> {
        Ok(Pmf::from_sample(&self.window(grid)?, self.bins)?)
    }

    pub fn describe(&self, grid: &ScanGrid, truth: &SynthConfig) -> String {
        let window = self.window(grid).unwrap_or_default();
        let mask = truth.feature_mask();
        let cols = truth.cols();
        let mut inside = 0;
        let mut total = 0;
        for i in self.row.saturating_sub(self.l)..=(self.row + self.l).min(truth.rows() - 1) {
            for dj in -(self.w as i64)..=self.w as i64 {
                let j = (self.col as i64 + dj).rem_euclid(cols as i64) as usize;
                total += 1;
                if mask[i * cols + j] != crate::synth::Feature::Background {
                    inside += 1;
                }
            }
        }
        let mut s = String::new();
        let _ = write!(
            s,
            "window {}x{} at row {} col {}: {} of {} samples on a feature",
            2 * self.l + 1,
            2 * self.w + 1,
            self.row,
            self.col,
            inside,
            total
        );
        debug_assert_eq!(window.len(), total);
        s
    }
}

/// Axial and circumferential pitch of the replication lattice, sized so the
/// largest reference hole (15 mm) keeps a few millimetres of clearance.
const SLOT_AXIAL_MM: f64 = 18.0;
const SLOT_CIRC_DEG: f64 = 6.0;

/// Adds copies of the layout's holes on a regular lattice until the anomaly
/// fraction first reaches `target`, keeping clear of the existing features
/// and of `keep_clear` (a row/column window). Returns the grown layout; its
/// achieved fraction may fall short when the lattice is full.
pub fn replicate_holes(
    config: &SynthConfig,
    target: f64,
    keep_clear: Option<&ProbeSpec>,
) -> Result<SynthConfig, BaselineError> {
    if config.holes.is_empty() {
        return Err(BaselineError::InvalidSweep("layout has no hole pattern to replicate".into()));
    }
    let total = (config.rows() * config.cols()) as f64;
    let mut out = config.clone();
    let mut covered = config.feature_mask().iter().filter(|f| **f != crate::synth::Feature::Background).count();
    if covered as f64 / total >= target {
        return Ok(out);
    }
    let pattern = config.holes.clone();
    let margin = 3.0;
    let largest = pattern.iter().map(|h| h.diameter).fold(0.0, f64::max);
    let clear_of_features = |cand: &HoleSpec, placed: &[HoleSpec]| {
        placed.iter().all(|h| {
            let dx = cand.center_axial - h.center_axial;
            let ds = config.arc_between(cand.center_circ, h.center_circ);
            let reach = 0.5 * (cand.diameter + h.diameter) + margin;
            dx * dx + ds * ds >= reach * reach
        })
    };
    let clear_of_weld = |cand: &HoleSpec| match config.weld {
        Some(w) => (cand.center_axial - w.center_axial).abs() >= 0.5 * (w.width + cand.diameter) + margin,
        None => true,
    };
    let clear_of_probe = |cand: &HoleSpec| match keep_clear {
        Some(p) => {
            let r = 0.5 * cand.diameter + margin;
            let row_mm = p.row as f64 * config.sensor.axial_pitch;
            let half_rows = (p.l as f64 + 0.5) * config.sensor.axial_pitch;
            let axial_clear = (cand.center_axial - row_mm).abs() >= half_rows + r;
            let col_deg = p.col as f64 * config.sensor.circ_pitch;
            let half_deg = (p.w as f64 + 0.5) * config.sensor.circ_pitch;
            let arc = config.arc_between(cand.center_circ, col_deg);
            let circ_clear = arc >= half_deg.to_radians() * config.radius() + r;
            axial_clear || circ_clear
        }
        None => true,
    };

    let mut next = 0usize;
    let mut a: f64 = 0.5 * largest + margin;
    while a + 0.5 * largest + margin <= config.pipe.axial_length {
        let mut c: f64 = 0.0;
        while c < 360.0 - 1e-9 {
            let src = pattern[next % pattern.len()];
            let cand = HoleSpec {
                center_axial: a.floor() + src.center_axial.fract(),
                center_circ: c.floor() + src.center_circ.fract(),
                ..src
            };
            if clear_of_weld(&cand) && clear_of_probe(&cand) && clear_of_features(&cand, &out.holes) {
                out.holes.push(cand);
                covered += out.hole_cells(out.holes.len() - 1).len();
                next += 1;
                if covered as f64 / total >= target {
                    return Ok(out);
                }
            }
            c += SLOT_CIRC_DEG;
        }
        a += SLOT_AXIAL_MM;
    }
    Ok(out)
}

/// Settings of a sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    /// Bins of `Q_A` and `Q_N`.
    pub k: usize,
    /// Axial length, in rows, of the noise-only calibration scan behind
    /// `Q_N`. A short reference keeps `Q_N`'s support to the bulk of the
    /// noise; a very long one reaches into the through-hole readings (about
    /// six standard deviations away) and those tail bins then dominate `δ_A`.
    pub noise_reference_rows: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            k: 67,
            noise_reference_rows: 10,
        }
    }
}

/// Noise-only calibration scan of `rows` rings with the layout's sensor.
pub fn noise_reference(config: &SynthConfig, rows: usize) -> SynthConfig {
    let mut cfg = config.noise_only();
    cfg.pipe.axial_length = rows as f64 * cfg.sensor.axial_pitch;
    cfg
}

/// One sensitivity report per requested anomaly fraction.
///
/// The probe window is cut from the base scan and kept clear of the added
/// holes, so `P` is identical for every fraction; `Q_N` comes from a
/// noise-only calibration scan of the same sensor. Fractions are achieved by
/// replicating the layout's hole pattern, and the achieved fraction is
/// reported.
pub fn sensitivity_sweep(
    config: &SynthConfig,
    fractions: &[f64],
    probe: &ProbeSpec,
    settings: &SweepSettings,
) -> Result<Vec<SensitivityReport>, BaselineError> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(BaselineError::InvalidSweep("fractions must lie in (0, 1)".into()));
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BaselineError::InvalidSweep("fractions must be increasing".into()));
    }
    if settings.noise_reference_rows == 0 {
        return Err(BaselineError::InvalidSweep("noise reference needs at least one row".into()));
    }
    let base = generate_scan(config)?;
    let p = probe.pmf(&base)?;
    let description = probe.describe(&base, config);
    let noise = generate_scan(&noise_reference(config, settings.noise_reference_rows))?;

    let mut reports = Vec::with_capacity(fractions.len());
    for &target in fractions {
        let layout = replicate_holes(config, target, Some(probe))?;
        let scan = generate_scan(&layout)?;
        debug_assert_eq!(probe.window(&scan)?, probe.window(&base)?);
        let (q_a, q_n) = shared_baselines(&scan, &noise, settings.k)?;
        let mut report = sensitivity_delta(&p, &q_a, &q_n)?;
        report.anomaly_fraction = Some(layout.anomaly_fraction());
        report.probe_description = description.clone();
        reports.push(report);
    }
    Ok(reports)
}

/// CSV with header
/// `fraction,delta_a,d_kl_qa,d_kl_qn,relative_sensitivity,dropped_terms,dropped_mass`;
/// an undefined sensitivity is written as `nan`.
pub fn sweep_to_csv(reports: &[SensitivityReport]) -> String {
    let mut out = String::from("fraction,delta_a,d_kl_qa,d_kl_qn,relative_sensitivity,dropped_terms,dropped_mass\n");
    for r in reports {
        let rel = r.relative_sensitivity.map_or_else(|| "nan".to_string(), |v| format!("{v:?}"));
        let frac = r.anomaly_fraction.map_or_else(|| "nan".to_string(), |v| format!("{v:?}"));
        let _ = writeln!(
            out,
            "{frac},{:?},{:?},{:?},{rel},{},{:?}",
            r.delta_a, r.d_kl_qa, r.d_kl_qn, r.dropped_terms, r.dropped_mass
        );
    }
    out
}
