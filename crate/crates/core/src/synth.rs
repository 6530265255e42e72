//! Synthetic pipe-inspection scans.
//!
//! A radial proximity sensor samples the inner wall of a pipe once per axial
//! millimetre and once per degree. The clean reading is the nominal standoff;
//! a hole pushes the surface away (reading + depth) and the girth weld
//! protrudes towards the sensor (reading − depth) over the full circumference.
//! Zero-mean Gaussian noise with `σ = standoff · 10^(−snr_db/20)` is added and
//! the result is snapped to the sensor resolution.
//!
//! Noise comes from a ChaCha8 stream seeded with `seed`; cells draw one normal
//! variate each in row-major order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{quantize, GridMeta, ScanGrid};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth configuration: {0}")]
    Invalid(String),
    #[error("holes {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialisation error: {0}")]
    Serialize(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipeSpec {
    /// Internal diameter in millimetres.
    pub inner_diameter: f64,
    pub wall_thickness: f64,
    /// Scanned length along the axis in millimetres.
    pub axial_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub nominal_standoff: f64,
    /// Signal-to-noise ratio in dB; `inf` disables noise.
    pub snr_db: f64,
    pub quantization: f64,
    #[serde(default = "one")]
    pub axial_pitch: f64,
    #[serde(default = "one")]
    pub circ_pitch: f64,
}

fn one() -> f64 {
    1.0
}

/// Circular defect. Positive depth moves the surface away from the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    /// Axial position of the centre, millimetres from the start of the scan.
    pub center_axial: f64,
    /// Angular position of the centre in degrees.
    pub center_circ: f64,
    pub diameter: f64,
    pub depth: f64,
}

/// Full-circumference girth weld.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeldSpec {
    pub center_axial: f64,
    pub width: f64,
    /// Protrusion towards the sensor; the reading drops by this amount.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub pipe: PipeSpec,
    pub sensor: SensorSpec,
    #[serde(default)]
    pub holes: Vec<HoleSpec>,
    #[serde(default)]
    pub weld: Option<WeldSpec>,
}

/// Hole centres of the reference layout: (axial mm, circumferential deg,
/// diameter mm, depth mm). Through holes sit on one axial line, blind holes
/// on another, all far enough from the weld and from each other that their
/// windowed responses stay separate for the default filter window.
///
/// The 5 mm hole is a through hole centred between samples so that its
/// footprint covers 8 cells over two channels; a 5 mm blind hole (5 cells,
/// 1 mm deep) sits below the noise floor of a 121x3 window.
const REFERENCE_HOLES: [(f64, f64, f64, f64); 10] = [
    (200.0, 20.0, 15.0, 2.0),
    (200.0, 92.0, 10.0, 2.0),
    (200.0, 164.0, 15.0, 2.0),
    (200.0, 236.0, 10.0, 2.0),
    (200.5, 308.5, 5.0, 2.0),
    (480.0, 56.0, 10.0, 1.0),
    (480.0, 128.0, 15.0, 1.0),
    (480.0, 200.0, 10.0, 1.0),
    (480.0, 272.0, 10.0, 1.0),
    (480.0, 344.0, 15.0, 1.0),
];

/// The reference inspection setup: a 400 mm bore, 2 mm wall, 1000 mm scan,
/// 100 mm standoff at 50 dB SNR and 0.1 mm resolution, five through and five
/// blind holes of 5, 10 and 15 mm, and a 10 mm weld protruding 2 mm.
pub fn paper_layout() -> SynthConfig {
    SynthConfig {
        seed: 1,
        pipe: PipeSpec {
            inner_diameter: 400.0,
            wall_thickness: 2.0,
            axial_length: 1000.0,
        },
        sensor: SensorSpec {
            nominal_standoff: 100.0,
            snr_db: 50.0,
            quantization: 0.1,
            axial_pitch: 1.0,
            circ_pitch: 1.0,
        },
        holes: REFERENCE_HOLES
            .iter()
            .map(|&(center_axial, center_circ, diameter, depth)| HoleSpec {
                center_axial,
                center_circ,
                diameter,
                depth,
            })
            .collect(),
        weld: Some(WeldSpec {
            center_axial: 800.0,
            width: 10.0,
            depth: 2.0,
        }),
    }
}

/// Which clean feature covers a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Background,
    Hole(usize),
    Weld,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, SynthError> {
        Ok(toml::to_string(self)?)
    }

    pub fn rows(&self) -> usize {
        (self.pipe.axial_length / self.sensor.axial_pitch).round() as usize
    }

    pub fn cols(&self) -> usize {
        (360.0 / self.sensor.circ_pitch).round() as usize
    }

    /// Noise standard deviation implied by the SNR.
    pub fn noise_sigma(&self) -> f64 {
        self.sensor.nominal_standoff * 10f64.powf(-self.sensor.snr_db / 20.0)
    }

    pub fn radius(&self) -> f64 {
        0.5 * self.pipe.inner_diameter
    }

    pub fn grid_meta(&self) -> GridMeta {
        GridMeta {
            axial_pitch: self.sensor.axial_pitch,
            circ_pitch: self.sensor.circ_pitch,
            quantization: self.sensor.quantization,
            periodic_circ: true,
        }
    }

    /// Axial position (mm) of row `i`.
    pub fn axial_of(&self, i: usize) -> f64 {
        i as f64 * self.sensor.axial_pitch
    }

    /// Angular position (deg) of column `j`.
    pub fn circ_of(&self, j: usize) -> f64 {
        j as f64 * self.sensor.circ_pitch
    }

    /// Arc length in mm between two angles, taking the short way round.
    pub fn arc_between(&self, a_deg: f64, b_deg: f64) -> f64 {
        let d = (a_deg - b_deg).rem_euclid(360.0);
        d.min(360.0 - d).to_radians() * self.radius()
    }

    pub fn in_hole(&self, hole: &HoleSpec, i: usize, j: usize) -> bool {
        let dx = self.axial_of(i) - hole.center_axial;
        let ds = self.arc_between(self.circ_of(j), hole.center_circ);
        let r = 0.5 * hole.diameter;
        dx * dx + ds * ds <= r * r
    }

    pub fn in_weld(&self, i: usize) -> bool {
        match self.weld {
            Some(weld) => {
                let x = self.axial_of(i);
                let half = 0.5 * weld.width;
                x >= weld.center_axial - half && x < weld.center_axial + half
            }
            None => false,
        }
    }

    /// Feature covering cell `(i, j)`; holes take precedence over the weld.
    pub fn feature_at(&self, i: usize, j: usize) -> Feature {
        for (k, hole) in self.holes.iter().enumerate() {
            if self.in_hole(hole, i, j) {
                return Feature::Hole(k);
            }
        }
        if self.in_weld(i) {
            Feature::Weld
        } else {
            Feature::Background
        }
    }

    /// Noise-free reading at `(i, j)`.
    pub fn clean_reading(&self, i: usize, j: usize) -> f64 {
        let base = self.sensor.nominal_standoff;
        match self.feature_at(i, j) {
            Feature::Background => base,
            Feature::Hole(k) => base + self.holes[k].depth,
            Feature::Weld => base - self.weld.map_or(0.0, |w| w.depth),
        }
    }

    /// Per-cell feature labels in row-major order.
    pub fn feature_mask(&self) -> Vec<Feature> {
        let (rows, cols) = (self.rows(), self.cols());
        let mut mask = vec![Feature::Background; rows * cols];
        for i in 0..rows {
            if self.in_weld(i) {
                mask[i * cols..(i + 1) * cols].fill(Feature::Weld);
            }
        }
        for (k, hole) in self.holes.iter().enumerate() {
            let (i0, i1, cols_hit) = self.hole_bounds(hole);
            for i in i0..i1 {
                for &j in &cols_hit {
                    if self.in_hole(hole, i, j) {
                        mask[i * cols + j] = Feature::Hole(k);
                    }
                }
            }
        }
        mask
    }

    /// Number of cells covered by any hole or the weld, over all cells.
    pub fn anomaly_fraction(&self) -> f64 {
        let mask = self.feature_mask();
        let hit = mask.iter().filter(|f| **f != Feature::Background).count();
        hit as f64 / mask.len() as f64
    }

    /// Cells of hole `k`.
    pub fn hole_cells(&self, k: usize) -> Vec<(usize, usize)> {
        let hole = &self.holes[k];
        let (i0, i1, cols_hit) = self.hole_bounds(hole);
        let mut cells = Vec::new();
        for i in i0..i1 {
            for &j in &cols_hit {
                if self.in_hole(hole, i, j) {
                    cells.push((i, j));
                }
            }
        }
        cells
    }

    fn hole_bounds(&self, hole: &HoleSpec) -> (usize, usize, Vec<usize>) {
        let r = 0.5 * hole.diameter;
        let pitch = self.sensor.axial_pitch;
        let i0 = ((hole.center_axial - r) / pitch).floor().max(0.0) as usize;
        let i1 = (((hole.center_axial + r) / pitch).ceil() as usize + 1).min(self.rows());
        let half_deg = (r / self.radius()).to_degrees();
        let span = (half_deg / self.sensor.circ_pitch).ceil() as i64 + 1;
        let cols = self.cols() as i64;
        let c = (hole.center_circ / self.sensor.circ_pitch).round() as i64;
        let mut hit: Vec<usize> = (c - span..=c + span).map(|j| j.rem_euclid(cols) as usize).collect();
        hit.sort_unstable();
        hit.dedup();
        (i0, i1, hit)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("pipe.inner_diameter", self.pipe.inner_diameter),
            ("pipe.wall_thickness", self.pipe.wall_thickness),
            ("pipe.axial_length", self.pipe.axial_length),
            ("sensor.nominal_standoff", self.sensor.nominal_standoff),
            ("sensor.quantization", self.sensor.quantization),
            ("sensor.axial_pitch", self.sensor.axial_pitch),
            ("sensor.circ_pitch", self.sensor.circ_pitch),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SynthError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sensor.snr_db.is_nan() {
            return Err(SynthError::Invalid("sensor.snr_db is NaN".into()));
        }
        if self.rows() == 0 || self.cols() == 0 {
            return Err(SynthError::Invalid("scan covers no samples".into()));
        }
        for (k, h) in self.holes.iter().enumerate() {
            if !(h.diameter.is_finite() && h.diameter > 0.0) {
                return Err(SynthError::Invalid(format!("hole {k}: diameter must be positive")));
            }
            if !(h.depth.is_finite() && h.depth != 0.0 && h.depth.abs() <= self.pipe.wall_thickness) {
                return Err(SynthError::Invalid(format!(
                    "hole {k}: depth must be non-zero and at most the wall thickness"
                )));
            }
            let r = 0.5 * h.diameter;
            if h.center_axial - r < 0.0 || h.center_axial + r > self.pipe.axial_length {
                return Err(SynthError::Invalid(format!("hole {k} extends past the scanned length")));
            }
        }
        for a in 0..self.holes.len() {
            for b in a + 1..self.holes.len() {
                let (ha, hb) = (&self.holes[a], &self.holes[b]);
                let dx = ha.center_axial - hb.center_axial;
                let ds = self.arc_between(ha.center_circ, hb.center_circ);
                let reach = 0.5 * (ha.diameter + hb.diameter);
                if dx * dx + ds * ds < reach * reach {
                    return Err(SynthError::Overlap(a, b));
                }
            }
        }
        if let Some(w) = self.weld {
            if !(w.width.is_finite() && w.width > 0.0) {
                return Err(SynthError::Invalid("weld width must be positive".into()));
            }
            if !w.depth.is_finite() {
                return Err(SynthError::Invalid("weld depth must be finite".into()));
            }
        }
        Ok(())
    }

    /// Same pipe and sensor with every feature removed and a derived seed:
    /// a noise-only reference scan.
    pub fn noise_only(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed ^ 0x9E37_79B9_7F4A_7C15,
            holes: Vec::new(),
            weld: None,
            ..self.clone()
        }
    }
}

/// Renders the scan described by `config`.
pub fn generate_scan(config: &SynthConfig) -> Result<ScanGrid, SynthError> {
    config.validate()?;
    let (rows, cols) = (config.rows(), config.cols());
    let mask = config.feature_mask();
    let base = config.sensor.nominal_standoff;
    let weld_depth = config.weld.map_or(0.0, |w| w.depth);
    let sigma = config.noise_sigma();
    let q = config.sensor.quantization;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| SynthError::Invalid(e.to_string()))?)
    } else {
        None
    };
    let values = mask
        .iter()
        .map(|f| {
            let clean = match f {
                Feature::Background => base,
                Feature::Hole(k) => base + config.holes[*k].depth,
                Feature::Weld => base - weld_depth,
            };
            let n = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
            quantize(clean + n, q)
        })
        .collect();
    ScanGrid::new(rows, cols, values, config.grid_meta()).map_err(|e| SynthError::Invalid(e.to_string()))
}
