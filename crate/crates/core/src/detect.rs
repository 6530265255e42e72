//! Turning a divergence map into a list of anomalies and weld bands.
//!
//! The map is binarised with a data-adaptive threshold, foreground cells are
//! grouped into 8-connected components (wrapping around the circumference
//! when the scan is periodic), and components that cover every channel of
//! some row are reported as welds.

use std::collections::VecDeque;
use std::fmt::Write as _;

use thiserror::Error;

use crate::hist::BinLayout;
use crate::kld::{FilterConfig, KldMap};
use crate::synth::{Feature, SynthConfig};

/// Bins of the map histogram used by Otsu's method.
const OTSU_BINS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("map is {map_rows}x{map_cols} but the layout describes {truth_rows}x{truth_cols}")]
    ShapeMismatch {
        map_rows: usize,
        map_cols: usize,
        truth_rows: usize,
        truth_cols: usize,
    },
    #[error("map contains NaN")]
    NanValue,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// How the binarisation threshold is derived from the map.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SegmentPolicy {
    /// Otsu's method on a 256-bin histogram of the finite map values; the
    /// threshold is the centre of the last background bin.
    #[default]
    Otsu,
    /// Mean plus `n` standard deviations of the finite map values.
    MeanPlusSigma(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anomaly {
    /// Axial position of the component centre, mm.
    pub axial_mm: f64,
    /// Circumferential position of the component centre, degrees.
    pub circ_deg: f64,
    pub axial_extent_mm: f64,
    pub circ_extent_deg: f64,
    pub area_cells: usize,
    pub peak_kld: f64,
    pub mean_kld: f64,
    /// 1 for the strongest response.
    pub depth_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weld {
    pub center_axial_mm: f64,
    pub width_mm: f64,
    pub area_cells: usize,
    pub peak_kld: f64,
    pub mean_kld: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub rows: usize,
    pub cols: usize,
    pub axial_pitch: f64,
    pub circ_pitch: f64,
    /// Anomalies in scan order (by first cell, row-major).
    pub anomalies: Vec<Anomaly>,
    pub welds: Vec<Weld>,
    /// Cells with values above this are foreground. Infinite when nothing
    /// can stand out (constant map).
    pub threshold_used: f64,
    /// Components discarded for being smaller than the minimum area.
    pub speckles_dropped: usize,
}

/// Smallest component kept by [`segment`]: a quarter of the window's axial
/// length. Any feature, however small, lights up a run of about `2l + 1`
/// rows because every window that touches it sees it; isolated noise
/// excursions do not.
pub fn min_component_area(config: &FilterConfig) -> usize {
    ((2 * config.l + 1) / 4).max(1)
}

/// Segments `map` with the speckle floor from [`min_component_area`].
pub fn segment(map: &KldMap, policy: SegmentPolicy) -> Result<AnomalyReport, DetectError> {
    segment_with(map, policy, min_component_area(map.config()))
}

/// Segments `map`, discarding components with fewer than `min_area` cells.
pub fn segment_with(map: &KldMap, policy: SegmentPolicy, min_area: usize) -> Result<AnomalyReport, DetectError> {
    let values = map.values();
    if values.iter().any(|v| v.is_nan()) {
        return Err(DetectError::NanValue);
    }
    let (rows, cols) = map.shape();
    let meta = *map.meta();
    let foreground = binarize(values, policy)?;
    let threshold_used = foreground.threshold;
    let labels = label_components(&foreground.mask, rows, cols, meta.periodic_circ);

    let mut anomalies = Vec::new();
    let mut welds = Vec::new();
    let mut speckles_dropped = 0;
    for cells in labels {
        let stats = ComponentStats::new(&cells, values, rows, cols);
        if stats.full_row {
            welds.push(Weld {
                center_axial_mm: 0.5 * (stats.row_min + stats.row_max) as f64 * meta.axial_pitch,
                width_mm: (stats.row_max - stats.row_min + 1) as f64 * meta.axial_pitch,
                area_cells: cells.len(),
                peak_kld: stats.peak,
                mean_kld: stats.mean,
            });
            continue;
        }
        if cells.len() < min_area {
            speckles_dropped += 1;
            continue;
        }
        let (circ_mid, circ_span) = circular_extent(&stats.columns, cols, meta.periodic_circ);
        anomalies.push(Anomaly {
            axial_mm: 0.5 * (stats.row_min + stats.row_max) as f64 * meta.axial_pitch,
            circ_deg: circ_mid * meta.circ_pitch,
            axial_extent_mm: (stats.row_max - stats.row_min + 1) as f64 * meta.axial_pitch,
            circ_extent_deg: circ_span as f64 * meta.circ_pitch,
            area_cells: cells.len(),
            peak_kld: stats.peak,
            mean_kld: stats.mean,
            depth_rank: 0,
        });
    }

    let mut order: Vec<usize> = (0..anomalies.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&anomalies[a], &anomalies[b]);
        y.peak_kld
            .total_cmp(&x.peak_kld)
            .then(y.area_cells.cmp(&x.area_cells))
            .then(a.cmp(&b))
    });
    for (rank, &idx) in order.iter().enumerate() {
        anomalies[idx].depth_rank = rank + 1;
    }

    Ok(AnomalyReport {
        rows,
        cols,
        axial_pitch: meta.axial_pitch,
        circ_pitch: meta.circ_pitch,
        anomalies,
        welds,
        threshold_used,
        speckles_dropped,
    })
}

struct Foreground {
    mask: Vec<bool>,
    threshold: f64,
}

fn binarize(values: &[f64], policy: SegmentPolicy) -> Result<Foreground, DetectError> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    match policy {
        SegmentPolicy::Otsu => {
            if finite.is_empty() || lo == hi {
                // nothing stands out from a constant field; infinities still do
                let mask = values.iter().map(|v| *v == f64::INFINITY).collect();
                return Ok(Foreground {
                    mask,
                    threshold: if finite.is_empty() { f64::NAN } else { hi },
                });
            }
            let layout = BinLayout::new(lo, hi, OTSU_BINS).expect("finite range");
            let bin = |v: f64| layout.bin_of(v).expect("value within its own range");
            let mut counts = [0u64; OTSU_BINS];
            for &v in &finite {
                counts[bin(v)] += 1;
            }
            // the threshold is the centre of the last background bin, as in
            // the usual histogram formulation of the method
            let threshold = layout.midpoint(otsu_bin(&counts, &layout));
            let mask = values.iter().map(|&v| v > threshold).collect();
            Ok(Foreground { mask, threshold })
        }
        SegmentPolicy::MeanPlusSigma(n) => {
            if !n.is_finite() {
                return Err(DetectError::InvalidPolicy(format!("sigma multiplier must be finite, got {n}")));
            }
            if finite.is_empty() {
                let mask = values.iter().map(|v| *v == f64::INFINITY).collect();
                return Ok(Foreground {
                    mask,
                    threshold: f64::NAN,
                });
            }
            let len = finite.len() as f64;
            let mean = finite.iter().sum::<f64>() / len;
            let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
            let threshold = mean + n * var.sqrt();
            let mask = values.iter().map(|&v| v > threshold).collect();
            Ok(Foreground { mask, threshold })
        }
    }
}

/// Index of the last background bin: maximises the between-class variance
/// over cuts after each bin, using bin centres as class values.
fn otsu_bin(counts: &[u64], layout: &BinLayout) -> usize {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let total_sum: f64 = counts
        .iter()
        .enumerate()
        .map(|(n, &c)| c as f64 * layout.midpoint(n))
        .sum();
    let (mut w0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (n, &c) in counts.iter().enumerate().take(counts.len() - 1) {
        w0 += c as f64;
        s0 += c as f64 * layout.midpoint(n);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (s0 / w0, (total_sum - s0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, n);
        }
    }
    best.1
}

/// Connected foreground components as lists of flat indices, in order of
/// their first cell.
fn label_components(mask: &[bool], rows: usize, cols: usize, periodic: bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(idx) = queue.pop_front() {
            cells.push(idx);
            let (i, j) = (idx / cols, idx % cols);
            for di in -1i64..=1 {
                let ni = i as i64 + di;
                if ni < 0 || ni >= rows as i64 {
                    continue;
                }
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let mut nj = j as i64 + dj;
                    if nj < 0 || nj >= cols as i64 {
                        if !periodic {
                            continue;
                        }
                        nj = nj.rem_euclid(cols as i64);
                    }
                    let n = ni as usize * cols + nj as usize;
                    if mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        cells.sort_unstable();
        out.push(cells);
    }
    out
}

struct ComponentStats {
    row_min: usize,
    row_max: usize,
    columns: Vec<bool>,
    full_row: bool,
    peak: f64,
    mean: f64,
}

impl ComponentStats {
    fn new(cells: &[usize], values: &[f64], rows: usize, cols: usize) -> Self {
        let mut per_row = vec![0usize; rows];
        let mut columns = vec![false; cols];
        let (mut row_min, mut row_max) = (usize::MAX, 0);
        let mut peak = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &idx in cells {
            let (i, j) = (idx / cols, idx % cols);
            per_row[i] += 1;
            columns[j] = true;
            row_min = row_min.min(i);
            row_max = row_max.max(i);
            peak = peak.max(values[idx]);
            sum += values[idx];
        }
        Self {
            row_min,
            row_max,
            columns,
            full_row: per_row.contains(&cols),
            peak,
            mean: sum / cells.len() as f64,
        }
    }
}

/// Midpoint (in column units, in `[0, cols)`) and width in columns of the
/// smallest arc covering the occupied columns.
fn circular_extent(columns: &[bool], cols: usize, periodic: bool) -> (f64, usize) {
    let occupied: Vec<usize> = (0..cols).filter(|&j| columns[j]).collect();
    let (first, last) = (occupied[0], *occupied.last().unwrap());
    if !periodic || occupied.len() == cols {
        return (0.5 * (first + last) as f64, last - first + 1);
    }
    // the widest empty gap (cyclically) is the part of the ring not covered
    let mut gap = (first + cols - last, last);
    for pair in occupied.windows(2) {
        let d = pair[1] - pair[0];
        if d > gap.0 {
            gap = (d, pair[0]);
        }
    }
    let start = (gap.1 + gap.0) % cols;
    let span = cols - gap.0 + 1;
    let mid = (start as f64 + 0.5 * (span - 1) as f64).rem_euclid(cols as f64);
    (mid, span)
}

/// Detection counts of a report against the layout that produced the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub welds_reported: usize,
    /// Spearman correlation between the reported ranking and hole severity
    /// (depth × diameter) over matched holes.
    pub rank_correlation: Option<f64>,
    /// The same against depth alone.
    pub depth_correlation: Option<f64>,
    /// For each hole of the layout, the anomaly index that matched it.
    pub matches: Vec<Option<usize>>,
}

/// Matches each anomaly to the hole whose footprint contains its centre
/// cell. A second anomaly on an already matched hole, or one whose centre
/// lies off every hole, is a false positive.
pub fn score_against_truth(report: &AnomalyReport, truth: &SynthConfig) -> Result<DetectionScore, DetectError> {
    if (report.rows, report.cols) != (truth.rows(), truth.cols()) {
        return Err(DetectError::ShapeMismatch {
            map_rows: report.rows,
            map_cols: report.cols,
            truth_rows: truth.rows(),
            truth_cols: truth.cols(),
        });
    }
    let mut matches: Vec<Option<usize>> = vec![None; truth.holes.len()];
    let mut false_positives = 0;
    for (idx, a) in report.anomalies.iter().enumerate() {
        let i = ((a.axial_mm / report.axial_pitch).round() as usize).min(report.rows - 1);
        let j = ((a.circ_deg / report.circ_pitch).round() as usize) % report.cols;
        match truth.feature_at(i, j) {
            Feature::Hole(k) if matches[k].is_none() => matches[k] = Some(idx),
            _ => false_positives += 1,
        }
    }
    let true_positives = matches.iter().filter(|m| m.is_some()).count();

    let mut strength = Vec::new();
    let mut severity = Vec::new();
    let mut depth = Vec::new();
    for (k, m) in matches.iter().enumerate() {
        if let Some(idx) = m {
            let hole = &truth.holes[k];
            // rank 1 is strongest, so negate to correlate with severity
            strength.push(-(report.anomalies[*idx].depth_rank as f64));
            severity.push(hole.depth.abs() * hole.diameter);
            depth.push(hole.depth.abs());
        }
    }
    Ok(DetectionScore {
        true_positives,
        false_positives,
        false_negatives: truth.holes.len() - true_positives,
        welds_reported: report.welds.len(),
        rank_correlation: spearman(&strength, &severity),
        depth_correlation: spearman(&strength, &depth),
        matches,
    })
}

/// Spearman's rank correlation with average ranks for ties; `None` when
/// either side is constant or fewer than two pairs are given.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let avg = 0.5 * (start + end - 1) as f64 + 1.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// `key=value` lines describing the report.
pub fn report_to_text(report: &AnomalyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "threshold={:.6}", report.threshold_used);
    let _ = writeln!(s, "anomalies={}", report.anomalies.len());
    let _ = writeln!(s, "welds={}", report.welds.len());
    let _ = writeln!(s, "speckles_dropped={}", report.speckles_dropped);
    for (n, w) in report.welds.iter().enumerate() {
        let _ = writeln!(s, "weld.{}.center_axial_mm={:.3}", n + 1, w.center_axial_mm);
        let _ = writeln!(s, "weld.{}.width_mm={:.3}", n + 1, w.width_mm);
    }
    for (n, a) in report.anomalies.iter().enumerate() {
        let id = n + 1;
        let _ = writeln!(s, "anomaly.{id}.axial_mm={:.3}", a.axial_mm);
        let _ = writeln!(s, "anomaly.{id}.circ_deg={:.3}", a.circ_deg);
        let _ = writeln!(s, "anomaly.{id}.axial_extent_mm={:.3}", a.axial_extent_mm);
        let _ = writeln!(s, "anomaly.{id}.circ_extent_deg={:.3}", a.circ_extent_deg);
        let _ = writeln!(s, "anomaly.{id}.area={}", a.area_cells);
        let _ = writeln!(s, "anomaly.{id}.peak_kld={:.6}", a.peak_kld);
        let _ = writeln!(s, "anomaly.{id}.mean_kld={:.6}", a.mean_kld);
        let _ = writeln!(s, "anomaly.{id}.rank={}", a.depth_rank);
    }
    s
}

/// One CSV row per anomaly, then one per weld (rank 0, full circumference).
pub fn report_to_csv(report: &AnomalyReport) -> String {
    let mut s = String::from("id,axial_mm,circ_deg,axial_extent_mm,circ_extent_deg,area,peak_kld,mean_kld,rank,kind\n");
    let mut id = 0;
    for a in &report.anomalies {
        id += 1;
        let _ = writeln!(
            s,
            "{id},{:.3},{:.3},{:.3},{:.3},{},{:.6},{:.6},{},anomaly",
            a.axial_mm, a.circ_deg, a.axial_extent_mm, a.circ_extent_deg, a.area_cells, a.peak_kld, a.mean_kld, a.depth_rank
        );
    }
    let full_circle = report.cols as f64 * report.circ_pitch;
    for w in &report.welds {
        id += 1;
        let _ = writeln!(
            s,
            "{id},{:.3},{:.3},{:.3},{:.3},{},{:.6},{:.6},0,weld",
            w.center_axial_mm,
            0.5 * full_circle,
            w.width_mm,
            full_circle,
            w.area_cells,
            w.peak_kld,
            w.mean_kld
        );
    }
    s
}
