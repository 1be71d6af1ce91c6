//! Sequence views, alignment paths and the on-disk matrix formats.
//!
//! A view stores one frame per column: `D` feature rows by `N` frame columns.
//! Two matrix containers are supported:
//!
//! * CSV: a `rows,cols` header line followed by `rows` lines of `cols`
//!   comma-separated reals. Values are written with 17 significant digits.
//! * Binary: the magic `MVTW`, `rows` and `cols` as little-endian `u32`, then
//!   `rows * cols` little-endian `f64` values in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"MVTW";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// Picks the format from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

/// One view of a sequence: features by frames, plus optional phase labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceView {
    data: DMatrix<f64>,
    annotations: Option<Vec<i64>>,
    name: String,
}

impl SequenceView {
    pub fn new(data: DMatrix<f64>, name: impl Into<String>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::Shape(format!(
                "sequence view must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at row {r}, column {c}"
            )));
        }
        Ok(SequenceView {
            data,
            annotations: None,
            name: name.into(),
        })
    }

    pub fn with_annotations(mut self, annotations: Vec<i64>) -> Result<Self> {
        if annotations.len() != self.frames() {
            return Err(Error::Shape(format!(
                "annotations have length {} but view has {} frames",
                annotations.len(),
                self.frames()
            )));
        }
        self.annotations = Some(annotations);
        Ok(self)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    pub fn annotations(&self) -> Option<&[i64]> {
        self.annotations.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> usize {
        self.data.nrows()
    }

    pub fn frames(&self) -> usize {
        self.data.ncols()
    }

    /// Returns `X^(idx)`: column `k` of the result is column `idx[k]` of `self`.
    pub fn apply_path(&self, idx: &[usize]) -> Result<SequenceView> {
        if idx.is_empty() {
            return Err(Error::InvalidArgument("empty index vector".into()));
        }
        let n = self.frames();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let data = select_columns(&self.data, idx);
        let annotations = self
            .annotations
            .as_ref()
            .map(|a| idx.iter().map(|&i| a[i]).collect());
        Ok(SequenceView {
            data,
            annotations,
            name: self.name.clone(),
        })
    }
}

/// Gathers columns of `m` in the order given by `idx`. Indices must be in range.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        out.set_column(k, &m.column(i));
    }
    out
}

/// Adds each column of `grad` into column `idx[k]` of a `rows x n` matrix.
/// This is the adjoint of [`select_columns`].
pub fn scatter_columns(grad: &DMatrix<f64>, idx: &[usize], n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(grad.nrows(), n);
    for (k, &i) in idx.iter().enumerate() {
        let mut col = out.column_mut(i);
        col += grad.column(k);
    }
    out
}

#[derive(Debug, Clone)]
pub struct PairedViews {
    pub x: SequenceView,
    pub y: SequenceView,
}

impl PairedViews {
    pub fn new(x: SequenceView, y: SequenceView) -> Self {
        PairedViews { x, y }
    }
}

/// A warping path: `px[k]` in X is matched with `py[k]` in Y.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath {
    pub px: Vec<usize>,
    pub py: Vec<usize>,
}

impl AlignmentPath {
    pub fn new(px: Vec<usize>, py: Vec<usize>) -> Result<Self> {
        if px.len() != py.len() {
            return Err(Error::Shape(format!(
                "path halves differ in length: {} vs {}",
                px.len(),
                py.len()
            )));
        }
        Ok(AlignmentPath { px, py })
    }

    pub fn len(&self) -> usize {
        self.px.len()
    }

    pub fn is_empty(&self) -> bool {
        self.px.is_empty()
    }

    /// Uniform-stretch path between `nx` and `ny` frames.
    ///
    /// Walks the grid greedily towards the straight line joining the corners,
    /// so the result is always a valid path.
    pub fn diagonal(nx: usize, ny: usize) -> Self {
        assert!(nx >= 1 && ny >= 1);
        let (mut i, mut j) = (0usize, 0usize);
        let mut px = vec![0];
        let mut py = vec![0];
        let (fx, fy) = ((nx - 1) as f64, (ny - 1) as f64);
        while i + 1 < nx || j + 1 < ny {
            let candidates = [(1usize, 1usize), (1, 0), (0, 1)];
            let (di, dj) = candidates
                .iter()
                .copied()
                .filter(|&(di, dj)| i + di < nx && j + dj < ny)
                .min_by(|a, b| {
                    let off = |(di, dj): (usize, usize)| {
                        let (a, b) = ((i + di) as f64, (j + dj) as f64);
                        // distance to the line a*fy = b*fx, unnormalized
                        (a * fy - b * fx).abs()
                    };
                    off(*a).total_cmp(&off(*b))
                })
                .expect("a legal step always exists before the corner");
            i += di;
            j += dj;
            px.push(i);
            py.push(j);
        }
        AlignmentPath { px, py }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("px,py\n");
        for (a, b) in self.px.iter().zip(&self.py) {
            let _ = writeln!(s, "{a},{b}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("px,py") => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "path csv must start with 'px,py', found {other:?}"
                )))
            }
        }
        let mut px = Vec::new();
        let mut py = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                    Error::InvalidArgument(format!("bad path row {}: {line:?}", lineno + 2))
                })
            };
            let mut parts = line.split(',');
            px.push(parse(parts.next())?);
            py.push(parse(parts.next())?);
        }
        AlignmentPath::new(px, py)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| Error::load(path, e.to_string()))
    }
}

pub fn parse_matrix_csv(text: &str) -> std::result::Result<DMatrix<f64>, String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or("empty file")?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    if dims.len() != 2 {
        return Err(format!("malformed header {header:?}, expected 'rows,cols'"));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| format!("malformed header row count {:?}", dims[0]))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| format!("malformed header column count {:?}", dims[1]))?;
    let mut m = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for (lineno, line) in lines {
        if r >= rows {
            return Err(format!("line {}: more than {rows} data rows", lineno + 1));
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(format!(
                "row {r} (line {}): expected {cols} columns, found {}",
                lineno + 1,
                cells.len()
            ));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| format!("row {r}, column {c}: cannot parse {:?}", cell.trim()))?;
            if !v.is_finite() {
                return Err(format!("row {r}, column {c}: non-finite value {v}"));
            }
            m[(r, c)] = v;
        }
        r += 1;
    }
    if r != rows {
        return Err(format!("expected {rows} data rows, found {r}"));
    }
    Ok(m)
}

pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = format!("{},{}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                s.push(',');
            }
            let _ = write!(s, "{:.16e}", m[(r, c)]);
        }
        s.push('\n');
    }
    s
}

pub fn parse_matrix_binary(bytes: &[u8]) -> std::result::Result<DMatrix<f64>, String> {
    if bytes.len() < 12 {
        return Err(format!("header truncated: {} bytes, need 12", bytes.len()));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(format!("bad magic {:?}, expected \"MVTW\"", &bytes[..4]));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(format!(
            "dimension mismatch: {rows}x{cols} needs {expected} bytes, file has {}",
            bytes.len()
        ));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for (k, chunk) in bytes[12..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        let (r, c) = (k / cols, k % cols);
        if !v.is_finite() {
            return Err(format!("row {r}, column {c}: non-finite value {v}"));
        }
        m[(r, c)] = v;
    }
    Ok(m)
}

pub fn format_matrix_binary(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + m.len() * 8);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.extend_from_slice(&m[(r, c)].to_le_bytes());
        }
    }
    out
}

/// Reads a bare matrix in the given container format.
pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>> {
    let parsed = match format {
        MatrixFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_matrix_csv(&text)
        }
        MatrixFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_matrix_binary(&bytes)
        }
    };
    parsed.map_err(|msg| Error::load(path, msg))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<()> {
    let res = match format {
        MatrixFormat::Csv => fs::write(path, format_matrix_csv(m)),
        MatrixFormat::Binary => fs::write(path, format_matrix_binary(m)),
    };
    res.map_err(|e| Error::io(path, e))
}

/// Loads a matrix file as a [`SequenceView`] named after the file stem.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<SequenceView> {
    let data = read_matrix(path, format)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SequenceView::new(data, name).map_err(|e| Error::load(path, e.to_string()))
}

pub fn read_annotations(path: &Path) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::load(path, format!("line {}: not an integer: {l:?}", i + 1)))
        })
        .collect()
}

pub fn write_annotations(path: &Path, labels: &[i64]) -> Result<()> {
    let mut s = String::new();
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(v: &[&[f64]]) -> DMatrix<f64> {
        let d = v[0].len();
        DMatrix::from_fn(d, v.len(), |r, c| v[c][r])
    }

    #[test]
    fn csv_header_sets_shape() {
        let m = parse_matrix_csv("2,3\n0,1,2\n3,4,5").unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 3));
        assert_eq!(m[(1, 2)], 5.0);
        let view = SequenceView::new(m, "x").unwrap();
        assert_eq!((view.features(), view.frames()), (2, 3));
    }

    #[test]
    fn binary_single_zero() {
        let mut bytes = b"MVTW".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0.0f64.to_le_bytes());
        let m = parse_matrix_binary(&bytes).unwrap();
        assert_eq!(m, DMatrix::from_element(1, 1, 0.0));
    }

    #[test]
    fn csv_nan_names_cell() {
        let err = parse_matrix_csv("1,2\n0,nan").unwrap_err();
        assert!(err.contains("row 0, column 1"), "{err}");
    }

    #[test]
    fn csv_malformed_header_and_row_count() {
        assert!(parse_matrix_csv("2;3\n").unwrap_err().contains("header"));
        assert!(parse_matrix_csv("2,2\n1,2\n").unwrap_err().contains("expected 2 data rows"));
        assert!(parse_matrix_csv("1,2\n1,2,3\n").unwrap_err().contains("expected 2 columns"));
    }

    #[test]
    fn binary_rejects_bad_magic_and_length() {
        let mut bytes = format_matrix_binary(&DMatrix::from_element(2, 2, 1.0));
        bytes.pop();
        assert!(parse_matrix_binary(&bytes).unwrap_err().contains("dimension mismatch"));
        bytes[0] = b'X';
        assert!(parse_matrix_binary(&bytes).unwrap_err().contains("magic"));
    }

    #[test]
    fn binary_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let bytes = format_matrix_binary(&m);
        let second = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        assert_eq!(second, 2.0);
    }

    #[test]
    fn apply_path_examples() {
        let v = SequenceView::new(cols(&[&[1.0], &[2.0], &[3.0]]), "x")
            .unwrap()
            .with_annotations(vec![7, 8, 9])
            .unwrap();
        assert_eq!(v.apply_path(&[0, 1, 2]).unwrap(), v);

        let v2 = SequenceView::new(cols(&[&[1.0, -1.0], &[2.0, -2.0]]), "x").unwrap();
        let w = v2.apply_path(&[0, 0, 1]).unwrap();
        assert_eq!(w.data(), &cols(&[&[1.0, -1.0], &[1.0, -1.0], &[2.0, -2.0]]));

        assert!(matches!(
            v2.apply_path(&[5]),
            Err(Error::IndexOutOfRange { index: 5, len: 2 })
        ));
        assert_eq!(v.apply_path(&[2, 0]).unwrap().annotations(), Some(&[9, 7][..]));
    }

    #[test]
    fn view_invariants() {
        assert!(SequenceView::new(DMatrix::zeros(0, 3), "x").is_err());
        assert!(SequenceView::new(DMatrix::from_element(1, 1, f64::INFINITY), "x").is_err());
        let v = SequenceView::new(DMatrix::zeros(1, 3), "x").unwrap();
        assert!(v.with_annotations(vec![1, 2]).is_err());
    }

    #[test]
    fn diagonal_path_is_valid_and_stretches() {
        let p = AlignmentPath::diagonal(4, 4);
        assert_eq!(p.px, vec![0, 1, 2, 3]);
        assert_eq!(p.py, vec![0, 1, 2, 3]);
        let p = AlignmentPath::diagonal(5, 2);
        assert!(crate::warp::validate_path(&p, 5, 2));
        let p = AlignmentPath::diagonal(1, 3);
        assert_eq!(p.px, vec![0, 0, 0]);
    }

    #[test]
    fn path_csv_round_trip() {
        let p = AlignmentPath::new(vec![0, 1, 1], vec![0, 0, 1]).unwrap();
        assert_eq!(AlignmentPath::from_csv(&p.to_csv()).unwrap(), p);
        assert!(AlignmentPath::from_csv("a,b\n").is_err());
    }

    #[test]
    fn scatter_is_adjoint_of_select() {
        let m = DMatrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let idx = [0, 0, 2, 1];
        let g = DMatrix::from_fn(2, 4, |r, c| (r + 2 * c) as f64 - 1.5);
        let lhs = select_columns(&m, &idx).dot(&g);
        let rhs = m.dot(&scatter_columns(&g, &idx, 3));
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
