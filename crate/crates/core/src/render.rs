//! Colour-map images of grids and divergence maps as binary PGM/PPM.
//!
//! One pixel per cell, row `i` of the grid on image row `i`. Grayscale
//! images are `P5`, heat images `P6`; both use maxval 255.

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("values buffer holds {got} cells, expected {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, got: usize },
    #[error("image would be empty")]
    Empty,
    #[error("NaN at cell {0}")]
    NanValue(usize),
    #[error("colour range needs lo < hi (lo={lo}, hi={hi})")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Palette {
    #[default]
    Grayscale,
    Heat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scale {
    /// Affine map of `[lo, hi]` onto 0..=255.
    #[default]
    Linear,
    /// Distinct values spread evenly over 0..=255 by their order.
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColorMapSpec {
    pub palette: Palette,
    pub scale: Scale,
    /// Explicit range for linear scaling; defaults to the finite min/max.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// Encoded image plus the number of infinite cells that were clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub bytes: Vec<u8>,
    pub clamped: usize,
}

/// Heat palette entry `n`: black → red → yellow → white, each leg 85 steps.
pub fn heat(n: u8) -> [u8; 3] {
    let v = 3 * n as u16;
    let leg = |offset: u16| v.saturating_sub(offset).min(255) as u8;
    [leg(0), leg(255), leg(510)]
}

/// The full 256-entry heat table.
pub fn heat_table() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    for (n, entry) in table.iter_mut().enumerate() {
        *entry = heat(n as u8);
    }
    table
}

/// Grey level (0..=255) of every cell.
pub fn levels(values: &[f64], spec: &ColorMapSpec) -> Result<(Vec<u8>, usize), RenderError> {
    if let Some(n) = values.iter().position(|v| v.is_nan()) {
        return Err(RenderError::NanValue(n));
    }
    if let (Some(lo), Some(hi)) = (spec.lo, spec.hi) {
        if !(lo < hi) {
            return Err(RenderError::InvalidRange { lo, hi });
        }
    }
    let clamped = values.iter().filter(|v| v.is_infinite()).count();
    let out = match spec.scale {
        Scale::Linear => {
            let (min, max) = values
                .iter()
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let lo = spec.lo.unwrap_or(min);
            let hi = spec.hi.unwrap_or(max);
            values
                .iter()
                .map(|&v| {
                    if v == f64::INFINITY {
                        255
                    } else if v == f64::NEG_INFINITY || !(hi > lo) {
                        0
                    } else {
                        let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                        (t * 255.0).round() as u8
                    }
                })
                .collect()
        }
        Scale::Rank => {
            let mut distinct: Vec<f64> = values.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let top = distinct.len().saturating_sub(1).max(1) as f64;
            values
                .iter()
                .map(|v| {
                    let r = distinct.partition_point(|d| d < v) as f64;
                    (r / top * 255.0).round() as u8
                })
                .collect()
        }
    };
    Ok((out, clamped))
}

/// Encodes `values` (row-major, `rows`×`cols`) as PGM or PPM bytes.
pub fn render(values: &[f64], rows: usize, cols: usize, spec: &ColorMapSpec) -> Result<Rendered, RenderError> {
    if values.len() != rows * cols {
        return Err(RenderError::ShapeMismatch {
            rows,
            cols,
            got: values.len(),
        });
    }
    if values.is_empty() {
        return Err(RenderError::Empty);
    }
    let (grey, clamped) = levels(values, spec)?;
    let magic = match spec.palette {
        Palette::Grayscale => "P5",
        Palette::Heat => "P6",
    };
    let mut bytes = format!("{magic}\n{cols} {rows}\n255\n").into_bytes();
    match spec.palette {
        Palette::Grayscale => bytes.extend_from_slice(&grey),
        Palette::Heat => {
            let table = heat_table();
            bytes.reserve(grey.len() * 3);
            for g in grey {
                bytes.extend_from_slice(&table[g as usize]);
            }
        }
    }
    Ok(Rendered { bytes, clamped })
}

/// Renders to `path`; returns the number of clamped infinite cells.
pub fn render_map(values: &[f64], rows: usize, cols: usize, spec: &ColorMapSpec, path: &Path) -> Result<usize, RenderError> {
    let out = render(values, rows, cols, spec)?;
    fs::write(path, &out.bytes).map_err(|source| RenderError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(out.clamped)
}

/// 8-bit PGM of raw levels, e.g. a label mask.
pub fn pgm_bytes(levels: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(levels.len(), rows * cols, "mask does not match shape");
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend_from_slice(levels);
    bytes
}
