//! Dense matrices, label vectors and their on-disk formats.
//!
//! The binary matrix format ("SPFM") is little-endian:
//!
//! | bytes  | field                     |
//! |--------|---------------------------|
//! | 0..4   | magic `SPFM`              |
//! | 4..8   | version, `u32` (= 1)      |
//! | 8..16  | rows, `u64`               |
//! | 16..24 | cols, `u64`               |
//! | 24     | dtype (1 = f32, 2 = f64)  |
//! | 25..   | row-major payload         |
//!
//! f32 payloads are widened to f64 on load; all arithmetic is f64.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SPFM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 25;

/// Storage precision of an SPFM payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::contract(format!(
                "matrix {n_rows}x{n_cols} needs {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        Ok(Matrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::contract(format!(
                    "row {i} has {} columns, expected {n_cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Matrix {
            n_rows: rows.len(),
            n_cols,
            values,
        })
    }

    /// A single-column matrix.
    pub fn column_vector(v: &[f64]) -> Self {
        Matrix {
            n_rows: v.len(),
            n_cols: 1,
            values: v.to_vec(),
        }
    }

    /// A single-row matrix.
    pub fn row_vector(v: &[f64]) -> Self {
        Matrix {
            n_rows: 1,
            n_cols: v.len(),
            values: v.to_vec(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t.values[j * self.n_rows + i] = self.values[i * self.n_cols + j];
            }
        }
        t
    }

    /// Rows picked by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Matrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            values,
        }
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_cols {
            return Err(Error::contract(format!(
                "matvec: matrix has {} columns, vector has {}",
                self.n_cols,
                v.len()
            )));
        }
        Ok(self.rows().map(|r| dot(r, v)).collect())
    }

    /// `selfᵀ · v`.
    pub fn tmatvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_rows {
            return Err(Error::contract(format!(
                "transpose matvec: matrix has {} rows, vector has {}",
                self.n_rows,
                v.len()
            )));
        }
        let mut out = vec![0.0; self.n_cols];
        for (r, &vi) in self.rows().zip(v) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o += x * vi;
            }
        }
        Ok(out)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::contract(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = Matrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let orow = &mut out.values[i * other.n_cols..(i + 1) * other.n_cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos / self.n_cols.max(1), pos % self.n_cols.max(1));
            return Err(Error::Validation(format!(
                "{what}: non-finite value at row {i}, column {j}"
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Class labels paired with the rows of a feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        LabelVector { labels }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `max + 1`, or 0 when empty.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Per-class counts, indexed by label.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        LabelVector::new(idx.iter().map(|&i| self.labels[i]).collect())
    }

    /// Labels as real-valued regression targets.
    pub fn to_targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(v: Vec<usize>) -> Self {
        LabelVector::new(v)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Parses comma-separated numeric text; rows in file order.
pub fn parse_matrix_csv(text: &str, has_header: bool) -> Result<Matrix> {
    let mut values = Vec::new();
    let mut n_cols: Option<usize> = None;
    let mut n_rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if has_header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                col: Some(c + 1),
                msg: format!("`{}` is not a number", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite value at line {line_no}, column {}",
                    c + 1
                )));
            }
            values.push(v);
            count += 1;
        }
        match n_cols {
            None => n_cols = Some(count),
            Some(n) if n != count => {
                return Err(Error::Parse {
                    line: line_no,
                    col: None,
                    msg: format!("row has {count} columns, expected {n}"),
                })
            }
            _ => {}
        }
        n_rows += 1;
    }
    Matrix::new(n_rows, n_cols.unwrap_or(0), values)
}

pub fn load_matrix_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Matrix> {
    parse_matrix_csv(&read_text(path.as_ref())?, has_header)
}

pub fn save_matrix_csv(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    for r in m.rows() {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    write_bytes(path.as_ref(), s.as_bytes())
}

/// Serializes a matrix into SPFM bytes.
pub fn encode_matrix_bin(m: &Matrix, dtype: DType) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.values.len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.n_rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.n_cols as u64).to_le_bytes());
    out.push(dtype.code());
    match dtype {
        DType::F64 => {
            for v in &m.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        DType::F32 => {
            for v in &m.values {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Parses SPFM bytes.
pub fn decode_matrix_bin(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"SPFM\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n_rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let n_cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let dtype = DType::from_code(bytes[24])
        .ok_or_else(|| Error::Format(format!("unknown dtype code {}", bytes[24])))?;
    let expected = n_rows
        .checked_mul(n_cols)
        .and_then(|n| n.checked_mul(dtype.width() as u64))
        .ok_or_else(|| Error::Format(format!("dimensions {n_rows}x{n_cols} overflow")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len() as u64,
        });
    }
    let values: Vec<f64> = match dtype {
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    };
    let m = Matrix::new(n_rows as usize, n_cols as usize, values)?;
    m.ensure_finite("matrix payload")?;
    Ok(m)
}

pub fn save_matrix_bin(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    save_matrix_bin_as(m, path, DType::F64)
}

pub fn save_matrix_bin_as(m: &Matrix, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    write_bytes(path.as_ref(), &encode_matrix_bin(m, dtype))
}

pub fn load_matrix_bin(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix_bin(&bytes)
}

/// Loads `.csv`/`.txt` as headerless CSV, anything else as SPFM.
pub fn load_matrix_auto(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("txt") => {
            load_matrix_csv(path, false)
        }
        _ => load_matrix_bin(path),
    }
}

/// One non-negative integer per line.
pub fn parse_labels(text: &str) -> Result<LabelVector> {
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            col: None,
            msg: format!("`{t}` is not a non-negative integer label"),
        })?;
        labels.push(v);
    }
    Ok(LabelVector::new(labels))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    parse_labels(&read_text(path.as_ref())?)
}

pub fn save_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    for l in labels.as_slice() {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    write_bytes(path.as_ref(), s.as_bytes())
}

pub(crate) fn save_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_bytes(path.as_ref(), text.as_bytes())
}

pub(crate) fn load_text(path: impl AsRef<Path>) -> Result<String> {
    read_text(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_basic() {
        let m = parse_matrix_csv("1.0,2.0\n3.0,4.0", false).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    }

    #[test]
    fn csv_header_skipped() {
        let m = parse_matrix_csv("x,y\n1,2", true).unwrap();
        assert_eq!(m.shape(), (1, 2));
        assert_eq!(m.values(), &[1.0, 2.0]);
    }

    #[test]
    fn csv_ragged_names_line() {
        match parse_matrix_csv("1,2\n3", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_bad_cell_names_row_and_col() {
        match parse_matrix_csv("1,2\n3,abc", false) {
            Err(Error::Parse { line, col, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(col, Some(2));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_nan_is_validation_error() {
        assert!(matches!(
            parse_matrix_csv("1,NaN", false),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_matrix_csv("inf,1", false),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let bytes = encode_matrix_bin(&Matrix::zeros(0, 0), DType::F64);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(HEADER_LEN, 25);
        assert_eq!(&bytes[0..4], b"SPFM");
        assert_eq!(bytes[24], 2);
        assert_eq!(decode_matrix_bin(&bytes).unwrap().shape(), (0, 0));
    }

    #[test]
    fn header_layout() {
        let m = Matrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
        let b = encode_matrix_bin(&m, DType::F64);
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 3);
        assert_eq!(b.len(), 25 + 24);
        assert_eq!(f64::from_le_bytes(b[25..33].try_into().unwrap()), 1.5);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut b = encode_matrix_bin(&Matrix::zeros(1, 1), DType::F64);
        b[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_matrix_bin(&b), Err(Error::Format(_))));
    }

    #[test]
    fn bad_version_and_dtype_rejected() {
        let mut b = encode_matrix_bin(&Matrix::zeros(1, 1), DType::F64);
        b[4] = 2;
        assert!(matches!(decode_matrix_bin(&b), Err(Error::Format(_))));
        let mut b = encode_matrix_bin(&Matrix::zeros(1, 1), DType::F64);
        b[24] = 9;
        assert!(matches!(decode_matrix_bin(&b), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut b = encode_matrix_bin(&Matrix::zeros(2, 2), DType::F64);
        b.pop();
        assert!(matches!(
            decode_matrix_bin(&b),
            Err(Error::Truncated {
                expected: 32,
                found: 31
            })
        ));
        b.extend_from_slice(&[0, 0]);
        assert!(matches!(
            decode_matrix_bin(&b),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn f32_storage_widens_on_load() {
        let m = Matrix::from_rows(&[[0.5, 1.25], [-3.0, 8.0]]).unwrap();
        let b = encode_matrix_bin(&m, DType::F32);
        assert_eq!(b.len(), 25 + 16);
        assert_eq!(b[24], 1);
        assert_eq!(decode_matrix_bin(&b).unwrap(), m);
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("0\n1\n1\n").unwrap().as_slice(), &[0, 1, 1]);
        assert!(parse_labels("").unwrap().is_empty());
        match parse_labels("0\n-1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_labels("1.5\n").is_err());
    }

    #[test]
    fn file_round_trip_csv_then_bin() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("x.csv");
        std::fs::write(&csv, "0.1,2e-3,-7\n1e10,0,3.14159\n").unwrap();
        let m = load_matrix_csv(&csv, false).unwrap();
        let bin = dir.path().join("x.spfm");
        save_matrix_bin(&m, &bin).unwrap();
        let back = load_matrix_bin(&bin).unwrap();
        assert_eq!(m.values(), back.values());
        assert_eq!(load_matrix_auto(&csv).unwrap(), back);
    }

    proptest! {
        #[test]
        fn bin_round_trip_is_bit_identical(
            rows in 0usize..6,
            cols in 0usize..6,
            seed in proptest::collection::vec(-1e300f64..1e300, 36)
        ) {
            let m = Matrix::new(rows, cols, seed[..rows * cols].to_vec()).unwrap();
            let bytes = encode_matrix_bin(&m, DType::F64);
            let back = decode_matrix_bin(&bytes).unwrap();
            prop_assert_eq!(back.shape(), (rows, cols));
            prop_assert_eq!(encode_matrix_bin(&back, DType::F64), bytes);
        }

        #[test]
        fn csv_text_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
            let m = Matrix::row_vector(&vals);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.csv");
            save_matrix_csv(&m, &p).unwrap();
            prop_assert_eq!(load_matrix_csv(&p, false).unwrap(), m);
        }
    }
}
