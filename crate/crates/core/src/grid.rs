//! Scan grids: 2D scalar fields sampled on a cylindrical surface and unwrapped
//! onto a rectangular lattice.
//!
//! Rows run along the pipe axis (index `i`), columns around the circumference
//! (index `j`). When `periodic_circ` is set, the column index wraps so that a
//! window touching column 0 continues at the last column.
//!
//! Two on-disk encodings are supported:
//!
//! * CSV: one header line `rows,cols,axial_pitch,circ_pitch,quantization,periodic`
//!   followed by `rows` lines of `cols` comma-separated readings. Readings are
//!   printed with the number of decimals implied by the quantization step
//!   (0.1 mm → one decimal). A quantization of `0` marks a continuous field
//!   (for example a divergence map) whose values are printed in shortest
//!   round-trip form.
//! * Binary: magic `KLDG`, a version byte, then `rows` and `cols` as
//!   little-endian `u64`, `axial_pitch`, `circ_pitch`, `quantization` as
//!   little-endian `f64`, the periodic flag as a little-endian `u64` (0 or 1),
//!   and finally the row-major readings as little-endian `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Tolerance used when checking that a reading lies on the quantization lattice.
pub const QUANTIZATION_TOLERANCE: f64 = 1e-9;

const BINARY_MAGIC: &[u8; 4] = b"KLDG";
const BINARY_VERSION: u8 = 1;
const BINARY_HEADER_LEN: usize = 4 + 1 + 6 * 8;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must have at least one row and one column (got {rows}x{cols})")]
    EmptyGrid { rows: usize, cols: usize },

    #[error("value buffer holds {got} readings, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("pitch and quantization must be finite and positive (quantization may be 0)")]
    InvalidMetadata,

    #[error("reading at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("reading {value} at ({row}, {col}) is not a multiple of quantization {quantization}")]
    OffLattice {
        row: usize,
        col: usize,
        value: f64,
        quantization: f64,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("ragged data: row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("ragged data: found {got} data rows, expected {expected}")]
    RowCount { expected: usize, got: usize },

    #[error("non-numeric cell at ({row}, {col}): {text:?}")]
    NonNumeric {
        row: usize,
        col: usize,
        text: String,
    },

    #[error("binary grid: {0}")]
    MalformedBinary(String),

    #[error("window center ({row}, {col}) outside {rows}x{cols} grid")]
    CenterOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// File encodings accepted by [`load_grid`] and [`save_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Binary,
}

impl GridFormat {
    /// Picks the format from a file extension: `.bin`/`.kldg` are binary,
    /// everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("kldg") => GridFormat::Binary,
            _ => GridFormat::Csv,
        }
    }
}

/// How a window behaves where it would run past the axial ends of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxialBoundary {
    /// Keep the full `2l+1` rows by sliding the window inward; the centre
    /// is then off-centre near the ends. Falls back to the whole axis when
    /// the scan is shorter than the window.
    #[default]
    Shift,
    /// Drop the rows that fall outside the scan (partial window).
    Clip,
}

/// Lattice metadata shared by grids and derived maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMeta {
    /// Millimetres per axial step.
    pub axial_pitch: f64,
    /// Degrees per circumferential step.
    pub circ_pitch: f64,
    /// Reading resolution in millimetres; 0 for continuous fields.
    pub quantization: f64,
    pub periodic_circ: bool,
}

impl Default for GridMeta {
    fn default() -> Self {
        Self {
            axial_pitch: 1.0,
            circ_pitch: 1.0,
            quantization: 0.1,
            periodic_circ: true,
        }
    }
}

/// Dense, immutable 2D array of readings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    meta: GridMeta,
}

impl ScanGrid {
    /// Builds a grid from row-major readings, validating shape, finiteness and
    /// (when `quantization > 0`) lattice membership.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, meta: GridMeta) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 {
            return Err(GridError::EmptyGrid { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(GridError::ShapeMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        let pitches_ok = meta.axial_pitch.is_finite()
            && meta.axial_pitch > 0.0
            && meta.circ_pitch.is_finite()
            && meta.circ_pitch > 0.0;
        if !pitches_ok || !meta.quantization.is_finite() || meta.quantization < 0.0 {
            return Err(GridError::InvalidMetadata);
        }
        for (idx, &v) in values.iter().enumerate() {
            let (row, col) = (idx / cols, idx % cols);
            if !v.is_finite() {
                return Err(GridError::NonFinite { row, col });
            }
            if meta.quantization > 0.0 && !on_lattice(v, meta.quantization) {
                return Err(GridError::OffLattice {
                    row,
                    col,
                    value: v,
                    quantization: meta.quantization,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            meta,
        })
    }

    /// Number of axial samples (N_ℓ).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of circumferential samples (N_w).
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    /// Readings inside the `(2l+1) x (2w+1)` window centred on `(row, col)`.
    ///
    /// The window is clipped at the axial ends and wraps circumferentially
    /// when the grid is periodic (clipped otherwise). A window wider than the
    /// circumference visits each column once.
    pub fn window_subset(&self, row: usize, col: usize, l: usize, w: usize) -> Result<Vec<f64>, GridError> {
        if row >= self.rows || col >= self.cols {
            return Err(GridError::CenterOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut out = Vec::with_capacity((2 * l + 1) * (2 * w + 1));
        self.window_into(row, col, l, w, AxialBoundary::Clip, &mut out);
        Ok(out)
    }

    /// [`window_subset`](Self::window_subset) with an explicit axial boundary
    /// policy.
    pub fn window_subset_with(
        &self,
        row: usize,
        col: usize,
        l: usize,
        w: usize,
        boundary: AxialBoundary,
    ) -> Result<Vec<f64>, GridError> {
        if row >= self.rows || col >= self.cols {
            return Err(GridError::CenterOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut out = Vec::with_capacity((2 * l + 1) * (2 * w + 1));
        self.window_into(row, col, l, w, boundary, &mut out);
        Ok(out)
    }

    /// Inclusive row range of the window centred on `row`.
    pub fn window_rows(&self, row: usize, l: usize, boundary: AxialBoundary) -> (usize, usize) {
        let last = self.rows - 1;
        match boundary {
            AxialBoundary::Clip => (row.saturating_sub(l), (row + l).min(last)),
            AxialBoundary::Shift => {
                if 2 * l >= last {
                    (0, last)
                } else {
                    let r0 = row.saturating_sub(l).min(last - 2 * l);
                    (r0, r0 + 2 * l)
                }
            }
        }
    }

    fn window_into(&self, row: usize, col: usize, l: usize, w: usize, boundary: AxialBoundary, out: &mut Vec<f64>) {
        out.clear();
        let (r0, r1) = self.window_rows(row, l, boundary);
        let cols = self.window_columns(col, w);
        for r in r0..=r1 {
            let base = r * self.cols;
            match cols {
                ColumnSpan::Contiguous(c0, c1) => out.extend_from_slice(&self.values[base + c0..=base + c1]),
                ColumnSpan::Wrapped(c0, c1) => {
                    out.extend_from_slice(&self.values[base + c0..base + self.cols]);
                    out.extend_from_slice(&self.values[base..=base + c1]);
                }
            }
        }
    }

    /// Column indices covered by a window of half-size `w` around `col`.
    pub(crate) fn window_column_indices(&self, col: usize, w: usize) -> Vec<usize> {
        match self.window_columns(col, w) {
            ColumnSpan::Contiguous(c0, c1) => (c0..=c1).collect(),
            ColumnSpan::Wrapped(c0, c1) => (c0..self.cols).chain(0..=c1).collect(),
        }
    }

    fn window_columns(&self, col: usize, w: usize) -> ColumnSpan {
        if 2 * w + 1 >= self.cols {
            return ColumnSpan::Contiguous(0, self.cols - 1);
        }
        if !self.meta.periodic_circ {
            return ColumnSpan::Contiguous(col.saturating_sub(w), (col + w).min(self.cols - 1));
        }
        if col >= w && col + w < self.cols {
            ColumnSpan::Contiguous(col - w, col + w)
        } else {
            let start = (col + self.cols - w) % self.cols;
            let end = (col + w) % self.cols;
            ColumnSpan::Wrapped(start, end)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ColumnSpan {
    Contiguous(usize, usize),
    /// `start..cols` followed by `0..=end`.
    Wrapped(usize, usize),
}

fn on_lattice(v: f64, q: f64) -> bool {
    let steps = v / q;
    (steps - steps.round()).abs() * q <= QUANTIZATION_TOLERANCE
}

/// Snaps a reading to the quantization lattice.
///
/// When `1/q` is an integer the result is computed as `n / (1/q)`, which is
/// the correctly rounded value of the decimal string a CSV writer emits, so
/// text round trips are bit exact.
pub fn quantize(v: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return v;
    }
    let steps = (v / q).round();
    let inv = 1.0 / q;
    if (inv - inv.round()).abs() < 1e-9 {
        steps / inv.round()
    } else {
        steps * q
    }
}

fn decimals_for(q: f64) -> Option<usize> {
    if q <= 0.0 {
        return None;
    }
    let mut d = 0usize;
    let mut scaled = q;
    while d < 12 && (scaled - scaled.round()).abs() > 1e-9 * scaled.max(1.0) {
        scaled *= 10.0;
        d += 1;
    }
    Some(d)
}

fn write_reading(buf: &mut String, v: f64, decimals: Option<usize>) {
    match decimals {
        Some(d) => {
            // avoid "-0.0"
            let v = if v == 0.0 { 0.0 } else { v };
            let _ = write!(buf, "{v:.d$}");
        }
        None => {
            let _ = write!(buf, "{v:?}");
        }
    }
}

/// Renders the CSV encoding of a grid.
pub fn to_csv_string(grid: &ScanGrid) -> String {
    let m = &grid.meta;
    let mut buf = String::with_capacity(grid.values.len() * 7 + 64);
    let _ = writeln!(
        buf,
        "{},{},{:?},{:?},{:?},{}",
        grid.rows, grid.cols, m.axial_pitch, m.circ_pitch, m.quantization, m.periodic_circ
    );
    let decimals = decimals_for(m.quantization);
    for r in 0..grid.rows {
        for (c, &v) in grid.row(r).iter().enumerate() {
            if c > 0 {
                buf.push(',');
            }
            write_reading(&mut buf, v, decimals);
        }
        buf.push('\n');
    }
    buf
}

/// Parses the CSV encoding of a grid.
pub fn from_csv_str(text: &str) -> Result<ScanGrid, GridError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| GridError::MalformedHeader("empty file".into()))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(GridError::MalformedHeader(format!(
            "expected 6 fields, found {}",
            fields.len()
        )));
    }
    let parse_usize = |s: &str, name: &str| {
        s.parse::<usize>()
            .map_err(|_| GridError::MalformedHeader(format!("{name} is not an integer: {s:?}")))
    };
    let parse_f64 = |s: &str, name: &str| {
        s.parse::<f64>()
            .map_err(|_| GridError::MalformedHeader(format!("{name} is not a number: {s:?}")))
    };
    let rows = parse_usize(fields[0], "row count")?;
    let cols = parse_usize(fields[1], "column count")?;
    let meta = GridMeta {
        axial_pitch: parse_f64(fields[2], "axial pitch")?,
        circ_pitch: parse_f64(fields[3], "circumferential pitch")?,
        quantization: parse_f64(fields[4], "quantization")?,
        periodic_circ: match fields[5] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => {
                return Err(GridError::MalformedHeader(format!(
                    "periodic flag must be true/false, found {other:?}"
                )))
            }
        },
    };

    let mut values = Vec::with_capacity(rows.saturating_mul(cols));
    let mut seen_rows = 0usize;
    for (_, line) in lines {
        let row = seen_rows;
        let mut got = 0usize;
        for (col, cell) in line.split(',').enumerate() {
            let cell = cell.trim();
            let v = cell.parse::<f64>().map_err(|_| GridError::NonNumeric {
                row,
                col,
                text: cell.to_string(),
            })?;
            values.push(v);
            got += 1;
        }
        if got != cols {
            return Err(GridError::RaggedRow {
                row,
                expected: cols,
                got,
            });
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(GridError::RowCount {
            expected: rows,
            got: seen_rows,
        });
    }
    ScanGrid::new(rows, cols, values, meta)
}

/// Renders the binary encoding of a grid.
pub fn to_binary_bytes(grid: &ScanGrid) -> Vec<u8> {
    let m = &grid.meta;
    let mut buf = Vec::with_capacity(BINARY_HEADER_LEN + grid.values.len() * 8);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.push(BINARY_VERSION);
    buf.extend_from_slice(&(grid.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(grid.cols as u64).to_le_bytes());
    buf.extend_from_slice(&m.axial_pitch.to_le_bytes());
    buf.extend_from_slice(&m.circ_pitch.to_le_bytes());
    buf.extend_from_slice(&m.quantization.to_le_bytes());
    buf.extend_from_slice(&u64::from(m.periodic_circ).to_le_bytes());
    for v in &grid.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Parses the binary encoding of a grid.
pub fn from_binary_bytes(bytes: &[u8]) -> Result<ScanGrid, GridError> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(GridError::MalformedBinary(format!(
            "file is {} bytes, shorter than the {BINARY_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(GridError::MalformedBinary("bad magic".into()));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(GridError::MalformedBinary(format!("unsupported version {}", bytes[4])));
    }
    let word = |k: usize| -> [u8; 8] {
        let start = 5 + 8 * k;
        bytes[start..start + 8].try_into().expect("8-byte slice")
    };
    let rows = u64::from_le_bytes(word(0)) as usize;
    let cols = u64::from_le_bytes(word(1)) as usize;
    let periodic = match u64::from_le_bytes(word(5)) {
        0 => false,
        1 => true,
        other => return Err(GridError::MalformedBinary(format!("bad periodic flag {other}"))),
    };
    let meta = GridMeta {
        axial_pitch: f64::from_le_bytes(word(2)),
        circ_pitch: f64::from_le_bytes(word(3)),
        quantization: f64::from_le_bytes(word(4)),
        periodic_circ: periodic,
    };
    let body = &bytes[BINARY_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| GridError::MalformedBinary("dimensions overflow".into()))?;
    if body.len() != expected {
        return Err(GridError::MalformedBinary(format!(
            "payload is {} bytes, expected {expected}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ScanGrid::new(rows, cols, values, meta)
}

pub fn load_grid(path: &Path, format: GridFormat) -> Result<ScanGrid, GridError> {
    let io_err = |source| GridError::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        GridFormat::Csv => from_csv_str(&fs::read_to_string(path).map_err(io_err)?),
        GridFormat::Binary => from_binary_bytes(&fs::read(path).map_err(io_err)?),
    }
}

pub fn save_grid(grid: &ScanGrid, path: &Path, format: GridFormat) -> Result<(), GridError> {
    let bytes = match format {
        GridFormat::Csv => to_csv_string(grid).into_bytes(),
        GridFormat::Binary => to_binary_bytes(grid),
    };
    fs::write(path, bytes).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(periodic: bool) -> GridMeta {
        GridMeta {
            periodic_circ: periodic,
            ..GridMeta::default()
        }
    }

    fn ramp(rows: usize, cols: usize, periodic: bool) -> ScanGrid {
        let values = (0..rows * cols).map(|k| quantize(k as f64 * 0.1, 0.1)).collect();
        ScanGrid::new(rows, cols, values, meta(periodic)).unwrap()
    }

    #[test]
    fn parses_small_csv() {
        let text = "3,4,1.0,1.0,0.1,true\n\
                    100.0,100.1,99.9,100.0\n\
                    100.2,100.0,100.0,99.8\n\
                    101.0,102.0,100.0,100.0\n";
        let g = from_csv_str(text).unwrap();
        assert_eq!(g.shape(), (3, 4));
        assert!(g.meta().periodic_circ);
        assert_eq!(g.get(2, 1), 102.0);
    }

    #[test]
    fn eleven_cells_for_three_by_four_is_ragged() {
        let text = "3,4,1.0,1.0,0.1,true\n\
                    100.0,100.1,99.9,100.0\n\
                    100.2,100.0,100.0\n\
                    101.0,102.0,100.0,100.0\n";
        match from_csv_str(text) {
            Err(GridError::RaggedRow { row: 1, expected: 4, got: 3 }) => {}
            other => panic!("expected ragged-row error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_cell() {
        let text = "1,2,1.0,1.0,0.1,true\n100.0,abc\n";
        match from_csv_str(text) {
            Err(GridError::NonNumeric { row: 0, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let text = "1,2,1.0,1.0,0.1,true\n100.0,100.05\n";
        match from_csv_str(text) {
            Err(GridError::OffLattice { row: 0, col: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            from_csv_str("1,2,1.0,1.0,0.1\n1.0,2.0\n"),
            Err(GridError::MalformedHeader(_))
        ));
        assert!(matches!(
            from_csv_str("2,2,1.0,1.0,0.1,true\n1.0,2.0\n"),
            Err(GridError::RowCount { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn csv_layout_is_fixed_decimal() {
        let g = ScanGrid::new(1, 3, vec![100.0, 99.9, 102.0], meta(true)).unwrap();
        assert_eq!(to_csv_string(&g), "1,3,1.0,1.0,0.1,true\n100.0,99.9,102.0\n");
    }

    #[test]
    fn binary_rejects_bad_magic_and_truncation() {
        let g = ramp(2, 3, true);
        let mut bytes = to_binary_bytes(&g);
        assert_eq!(from_binary_bytes(&bytes).unwrap(), g);
        bytes.pop();
        assert!(matches!(from_binary_bytes(&bytes), Err(GridError::MalformedBinary(_))));
        bytes[0] = b'X';
        assert!(matches!(from_binary_bytes(&bytes), Err(GridError::MalformedBinary(_))));
    }

    #[test]
    fn interior_window_has_full_cardinality() {
        let g = ramp(10, 10, true);
        assert_eq!(g.window_subset(5, 5, 1, 1).unwrap().len(), 9);
        assert_eq!(g.window_subset(5, 5, 2, 3).unwrap().len(), 35);
    }

    #[test]
    fn degenerate_window_is_the_center() {
        let g = ramp(4, 5, true);
        assert_eq!(g.window_subset(2, 3, 0, 0).unwrap(), vec![g.get(2, 3)]);
    }

    #[test]
    fn axial_edge_is_clipped() {
        let g = ramp(10, 4, true);
        // rows 0,1,2 of column 2
        let win = g.window_subset(0, 2, 2, 0).unwrap();
        assert_eq!(win, vec![g.get(0, 2), g.get(1, 2), g.get(2, 2)]);
    }

    #[test]
    fn shifted_window_keeps_cardinality() {
        let g = ramp(10, 4, true);
        assert_eq!(g.window_rows(0, 2, AxialBoundary::Shift), (0, 4));
        assert_eq!(g.window_rows(9, 2, AxialBoundary::Shift), (5, 9));
        assert_eq!(g.window_rows(5, 2, AxialBoundary::Shift), (3, 7));
        assert_eq!(g.window_rows(3, 20, AxialBoundary::Shift), (0, 9));
        for i in 0..10 {
            let win = g.window_subset_with(i, 1, 2, 1, AxialBoundary::Shift).unwrap();
            assert_eq!(win.len(), 15);
        }
    }

    #[test]
    fn circumferential_seam_wraps() {
        let g = ramp(3, 8, true);
        let mut win = g.window_subset(1, 0, 0, 2).unwrap();
        let mut expected = vec![g.get(1, 6), g.get(1, 7), g.get(1, 0), g.get(1, 1), g.get(1, 2)];
        win.sort_by(f64::total_cmp);
        expected.sort_by(f64::total_cmp);
        assert_eq!(win, expected);

        let last = g.window_subset(1, 7, 0, 1).unwrap();
        assert_eq!(last.len(), 3);
        assert!(last.contains(&g.get(1, 0)));
    }

    #[test]
    fn non_periodic_grid_clips_columns() {
        let g = ramp(3, 8, false);
        assert_eq!(g.window_subset(1, 0, 0, 2).unwrap().len(), 3);
    }

    #[test]
    fn window_wider_than_circumference_has_no_duplicates() {
        let g = ramp(2, 4, true);
        assert_eq!(g.window_subset(0, 1, 0, 5).unwrap().len(), 4);
    }

    #[test]
    fn out_of_range_center_is_rejected() {
        let g = ramp(3, 3, true);
        assert!(matches!(
            g.window_subset(3, 0, 1, 1),
            Err(GridError::CenterOutOfRange { .. })
        ));
    }

    #[test]
    fn quantize_matches_decimal_text() {
        for n in -2000..2000 {
            let v = quantize(n as f64 * 0.1 + 0.04, 0.1);
            let text = format!("{v:.1}");
            assert_eq!(text.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn continuous_maps_use_round_trip_formatting() {
        let m = GridMeta {
            quantization: 0.0,
            ..GridMeta::default()
        };
        let g = ScanGrid::new(1, 2, vec![0.1 + 0.2, 1e-17], m).unwrap();
        let back = from_csv_str(&to_csv_string(&g)).unwrap();
        assert_eq!(back, g);
    }
}
