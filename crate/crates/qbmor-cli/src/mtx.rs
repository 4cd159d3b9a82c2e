//! Matrix Market exchange files, real `coordinate` and `array` matrices of `general` or
//! `symmetric` kind. Values are written with shortest round-trip rendering.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtxError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dimensions {rows}x{cols} overflow the addressable size")]
    Overflow { rows: usize, cols: usize },
}

fn parse_err(line: usize, msg: impl Into<String>) -> MtxError {
    MtxError::Parse { line, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

/// Sparse matrix as 0-based `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    /// Stored entries of `m` in column-major order; `-0.0` counts as stored.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for (j, col) in m.column_iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                if stored(*v) {
                    entries.push((i, j, *v));
                }
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), entries }
    }

    /// Duplicates are summed.
    pub fn to_dense(&self) -> Result<DMatrix<f64>, MtxError> {
        checked_len(self.rows, self.cols)?;
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        Ok(m)
    }
}

fn stored(v: f64) -> bool {
    v.to_bits() != 0
}

fn checked_len(rows: usize, cols: usize) -> Result<usize, MtxError> {
    rows.checked_mul(cols)
        .filter(|len| *len <= isize::MAX as usize / std::mem::size_of::<f64>())
        .ok_or(MtxError::Overflow { rows, cols })
}

/// Contents of a parsed file.
#[derive(Debug, Clone, PartialEq)]
pub enum MtxData {
    Dense(DMatrix<f64>),
    Sparse(Triplets),
}

impl MtxData {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MtxData::Dense(m) => m.shape(),
            MtxData::Sparse(t) => (t.rows, t.cols),
        }
    }

    pub fn into_dense(self) -> Result<DMatrix<f64>, MtxError> {
        match self {
            MtxData::Dense(m) => Ok(m),
            MtxData::Sparse(t) => t.to_dense(),
        }
    }

    pub fn into_triplets(self) -> Triplets {
        match self {
            MtxData::Dense(m) => Triplets::from_dense(&m),
            MtxData::Sparse(t) => t,
        }
    }
}

fn header(layout: Layout, symmetry: Symmetry) -> String {
    let layout = match layout {
        Layout::Coordinate => "coordinate",
        Layout::Array => "array",
    };
    let symmetry = match symmetry {
        Symmetry::General => "general",
        Symmetry::Symmetric => "symmetric",
    };
    format!("%%MatrixMarket matrix {layout} real {symmetry}")
}

/// Writes triplets; with `Symmetric` only entries on or below the diagonal are kept.
pub fn write_coordinate<W: Write>(mut out: W, t: &Triplets, symmetry: Symmetry) -> io::Result<()> {
    let kept: Vec<_> = t
        .entries
        .iter()
        .filter(|(i, j, _)| symmetry == Symmetry::General || i >= j)
        .collect();
    writeln!(out, "{}", header(Layout::Coordinate, symmetry))?;
    writeln!(out, "{} {} {}", t.rows, t.cols, kept.len())?;
    for (i, j, v) in kept {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    out.flush()
}

/// Column-major values; with `Symmetric` only the lower triangle.
pub fn write_array<W: Write>(mut out: W, m: &DMatrix<f64>, symmetry: Symmetry) -> io::Result<()> {
    writeln!(out, "{}", header(Layout::Array, symmetry))?;
    writeln!(out, "{} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        let first = if symmetry == Symmetry::Symmetric { j } else { 0 };
        for i in first..m.nrows() {
            writeln!(out, "{:e}", m[(i, j)])?;
        }
    }
    out.flush()
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.nrows() > 1 && (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)].to_bits() == m[(j, i)].to_bits()))
}

/// Picks coordinate layout when at most half the entries are nonzero, and the symmetric
/// kind for exactly symmetric square matrices.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> io::Result<()> {
    let out = BufWriter::new(File::create(path)?);
    let symmetry = if is_symmetric(m) { Symmetry::Symmetric } else { Symmetry::General };
    let nnz = m.iter().filter(|v| stored(**v)).count();
    if 2 * nnz <= m.len() {
        write_coordinate(out, &Triplets::from_dense(m), symmetry)
    } else {
        write_array(out, m, symmetry)
    }
}

pub fn write_triplets(path: &Path, t: &Triplets) -> io::Result<()> {
    write_coordinate(BufWriter::new(File::create(path)?), t, Symmetry::General)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    number: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next line that is neither blank nor a comment.
    fn next_data(&mut self) -> Result<Option<String>, MtxError> {
        for line in self.inner.by_ref() {
            self.number += 1;
            let line = line?;
            let trimmed = line.trim();
            if !trimmed.is_empty() && !trimmed.starts_with('%') {
                return Ok(Some(trimmed.to_string()));
            }
        }
        Ok(None)
    }
}

fn parse_header(line: &str) -> Result<(Layout, Symmetry), MtxError> {
    let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(1, format!("expected '%%MatrixMarket matrix <layout> real <symmetry>', found '{line}'")));
    }
    let layout = match words[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(parse_err(1, format!("unsupported layout '{other}'"))),
    };
    if !matches!(words[3].as_str(), "real" | "double" | "integer") {
        return Err(parse_err(1, format!("unsupported field '{}'; only real matrices are read", words[3])));
    }
    let symmetry = match words[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };
    Ok((layout, symmetry))
}

fn numbers<T: std::str::FromStr>(line: &str, count: usize, at: usize, what: &str) -> Result<Vec<T>, MtxError> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != count {
        return Err(parse_err(at, format!("expected {count} fields in {what}, found {}", parts.len())));
    }
    parts
        .iter()
        .map(|p| p.parse().map_err(|_| parse_err(at, format!("cannot parse '{p}' in {what}"))))
        .collect()
}

pub fn parse<R: BufRead>(input: R) -> Result<MtxData, MtxError> {
    let mut inner = input.lines();
    let first = inner.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let (layout, symmetry) = parse_header(&first)?;
    let mut lines = Lines { inner, number: 1 };
    let size = lines.next_data()?.ok_or_else(|| parse_err(lines.number, "missing size line"))?;
    let at = lines.number;
    let (rows, cols, count) = match layout {
        Layout::Coordinate => {
            let v: Vec<usize> = numbers(&size, 3, at, "size line")?;
            (v[0], v[1], v[2])
        }
        Layout::Array => {
            let v: Vec<usize> = numbers(&size, 2, at, "size line")?;
            let count = if symmetry == Symmetry::Symmetric { v[0] * (v[0] + 1) / 2 } else { checked_len(v[0], v[1])? };
            (v[0], v[1], count)
        }
    };
    checked_len(rows, cols)?;
    if symmetry == Symmetry::Symmetric && rows != cols {
        return Err(parse_err(at, format!("symmetric matrix must be square, found {rows}x{cols}")));
    }

    let data = match layout {
        Layout::Coordinate => {
            let mut entries = Vec::with_capacity(count);
            for _ in 0..count {
                let line = lines.next_data()?.ok_or_else(|| parse_err(lines.number, format!("expected {count} entries, found {}", entries.len())))?;
                let at = lines.number;
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(parse_err(at, format!("expected 'row col value', found '{line}'")));
                }
                let index = |s: &str, bound: usize, what: &str| -> Result<usize, MtxError> {
                    match s.parse::<usize>() {
                        Ok(k) if k >= 1 && k <= bound => Ok(k - 1),
                        _ => Err(parse_err(at, format!("{what} index '{s}' outside 1..={bound}"))),
                    }
                };
                let i = index(parts[0], rows, "row")?;
                let j = index(parts[1], cols, "column")?;
                let v: f64 = parts[2].parse().map_err(|_| parse_err(at, format!("cannot parse value '{}'", parts[2])))?;
                if symmetry == Symmetry::Symmetric && j > i {
                    return Err(parse_err(at, "symmetric file has an entry above the diagonal"));
                }
                entries.push((i, j, v));
                if symmetry == Symmetry::Symmetric && i != j {
                    entries.push((j, i, v));
                }
            }
            MtxData::Sparse(Triplets { rows, cols, entries })
        }
        Layout::Array => {
            let mut m = DMatrix::zeros(rows, cols);
            for j in 0..cols {
                let first = if symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in first..rows {
                    let line = lines.next_data()?.ok_or_else(|| parse_err(lines.number, format!("expected {count} values")))?;
                    let v: f64 = numbers(&line, 1, lines.number, "value")?[0];
                    m[(i, j)] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
            MtxData::Dense(m)
        }
    };
    if lines.next_data()?.is_some() {
        return Err(parse_err(lines.number, format!("more data than the {count} entries announced")));
    }
    Ok(data)
}

pub fn read(path: &Path) -> Result<MtxData, MtxError> {
    parse(BufReader::new(File::open(path)?))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, MtxError> {
    read(path)?.into_dense()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut buf = Vec::new();
        let nnz = m.iter().filter(|v| stored(**v)).count();
        let sym = if is_symmetric(m) { Symmetry::Symmetric } else { Symmetry::General };
        if 2 * nnz <= m.len() {
            write_coordinate(&mut buf, &Triplets::from_dense(m), sym).unwrap();
        } else {
            write_array(&mut buf, m, sym).unwrap();
        }
        parse(buf.as_slice()).unwrap().into_dense().unwrap()
    }

    #[test]
    fn identity_and_vector_round_trip() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert_eq!(round_trip(&eye), eye);
        let v = DMatrix::from_column_slice(3, 1, &[-1.5, 0.1, -2e-300]);
        assert_eq!(round_trip(&v), v);
    }

    #[test]
    fn awkward_values_are_exact() {
        let vals = [0.1 + 0.2, -1.0 / 3.0, f64::MIN_POSITIVE, 5e-324, f64::MAX, -0.0, 123456789.0];
        let m = DMatrix::from_column_slice(7, 1, &vals);
        let back = round_trip(&m);
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn symmetric_files_expand() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n3 3 2\n2 1 4.0\n3 3 -1\n";
        let m = parse(text.as_bytes()).unwrap().into_dense().unwrap();
        assert_eq!(m[(0, 1)], 4.0);
        assert_eq!(m[(1, 0)], 4.0);
        assert_eq!(m[(2, 2)], -1.0);
        let arr = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        let m = parse(arr.as_bytes()).unwrap().into_dense().unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let cases = [
            "",
            "%%MatrixMarket matrix coordinate complex general\n1 1 0\n",
            "%%MatrixMarket tensor coordinate real general\n1 1 0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n",
            "%%MatrixMarket matrix array real general\n1 2\n1\n2\n3\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n",
        ];
        for text in cases {
            assert!(matches!(parse(text.as_bytes()), Err(MtxError::Parse { .. })), "{text:?}");
        }
        let huge = format!("%%MatrixMarket matrix coordinate real general\n{} {} 0\n", usize::MAX, 2);
        assert!(matches!(parse(huge.as_bytes()), Err(MtxError::Overflow { .. })));
    }
}
