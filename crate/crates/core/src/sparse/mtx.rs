//! Matrix Market coordinate I/O.
//!
//! Only real (or integer) general/symmetric coordinate matrices are read.
//! Right-hand sides may additionally be given as `array` files with one column.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

struct Header {
    layout: Layout,
    symmetry: Symmetry,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(path: &Path, line: &str) -> Result<Header> {
    let tokens: Vec<String> = line
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(path, 1, format!("bad header `{line}`")));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(Error::UnsupportedFormat(other.to_string())),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::UnsupportedField(other.to_string())),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::UnsupportedFormat(format!("symmetry `{other}`"))),
    };
    Ok(Header { layout, symmetry })
}

/// Data lines with their 1-based line numbers, comments and blanks skipped.
fn data_lines<R: BufRead>(
    path: &Path,
    reader: R,
) -> Result<(String, impl Iterator<Item = Result<(usize, String)>>)> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => return Err(io_err(path, e)),
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let owned = path.to_path_buf();
    let rest = lines.filter_map(move |(idx, line)| match line {
        Err(e) => Some(Err(io_err(&owned, e))),
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((idx + 1, t.to_string())))
            }
        }
    });
    Ok((header, rest))
}

fn parse_usize(path: &Path, line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    tok.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what}")))
}

fn parse_f64(path: &Path, line: usize, tok: Option<&str>) -> Result<f64> {
    tok.ok_or_else(|| parse_err(path, line, "missing value"))?
        .parse()
        .map_err(|_| parse_err(path, line, "invalid value"))
}

/// Parses a coordinate matrix from any buffered reader; `path` is used in diagnostics.
pub fn read_matrix_market<R: BufRead>(
    reader: R,
    path: &Path,
    symmetry_expand: bool,
) -> Result<CsrMatrix> {
    let (header_line, mut lines) = data_lines(path, reader)?;
    let header = parse_header(path, &header_line)?;
    if header.layout != Layout::Coordinate {
        return Err(Error::UnsupportedFormat(
            "matrices must use coordinate layout".into(),
        ));
    }

    let (size_line, size) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing size line"))??;
    let mut tok = size.split_whitespace();
    let n_rows = parse_usize(path, size_line, tok.next(), "row count")?;
    let n_cols = parse_usize(path, size_line, tok.next(), "column count")?;
    let nnz = parse_usize(path, size_line, tok.next(), "entry count")?;
    if tok.next().is_some() {
        return Err(parse_err(path, size_line, "trailing tokens on size line"));
    }

    let mut triplets = Vec::with_capacity(if header.symmetry == Symmetry::Symmetric {
        2 * nnz
    } else {
        nnz
    });
    let mut seen = 0usize;
    for item in lines {
        let (line_no, line) = item?;
        if seen == nnz {
            return Err(parse_err(path, line_no, "more entries than declared"));
        }
        let mut tok = line.split_whitespace();
        let i = parse_usize(path, line_no, tok.next(), "row index")?;
        let j = parse_usize(path, line_no, tok.next(), "column index")?;
        let v = parse_f64(path, line_no, tok.next())?;
        if tok.next().is_some() {
            return Err(parse_err(path, line_no, "trailing tokens"));
        }
        if i == 0 || j == 0 || i > n_rows || j > n_cols {
            return Err(Error::IndexOutOfBounds {
                path: path.to_path_buf(),
                line: line_no,
                row: i,
                col: j,
                n_rows,
                n_cols,
            });
        }
        triplets.push((i - 1, j - 1, v));
        if symmetry_expand && header.symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(
            path,
            0,
            format!("declared {nnz} entries, found {seen}"),
        ));
    }
    CsrMatrix::from_triplets(n_rows, n_cols, triplets)
}

pub fn load_matrix_market(path: impl AsRef<Path>, symmetry_expand: bool) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    read_matrix_market(BufReader::new(file), path, symmetry_expand)
}

/// Writes `m` as a general coordinate file. Values use shortest round-trip formatting.
pub fn write_matrix_market<W: Write>(m: &CsrMatrix, mut out: W) -> std::io::Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    out.flush()
}

pub fn save_matrix_market(m: &CsrMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_matrix_market(m, BufWriter::new(file)).map_err(|e| io_err(path, e))
}

/// Reads a vector stored either as an `array` file or as an `n x 1` coordinate file.
pub fn load_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| io_err(&path, e))?;
    let (header_line, mut lines) = data_lines(&path, BufReader::new(file))?;
    let header = parse_header(&path, &header_line)?;
    let (size_line, size) = lines
        .next()
        .ok_or_else(|| parse_err(&path, 2, "missing size line"))??;
    let mut tok = size.split_whitespace();
    let n = parse_usize(&path, size_line, tok.next(), "row count")?;
    let cols = parse_usize(&path, size_line, tok.next(), "column count")?;
    if cols != 1 {
        return Err(Error::Dimension(format!("vector file has {cols} columns")));
    }
    match header.layout {
        Layout::Array => {
            let mut out = Vec::with_capacity(n);
            for item in lines {
                let (line_no, line) = item?;
                out.push(parse_f64(&path, line_no, line.split_whitespace().next())?);
            }
            if out.len() != n {
                return Err(parse_err(
                    &path,
                    0,
                    format!("expected {n} values, found {}", out.len()),
                ));
            }
            Ok(out)
        }
        Layout::Coordinate => {
            drop(lines);
            let m = load_matrix_market(&path, false)?;
            let mut out = vec![0.0; n];
            for (i, _, v) in m.triplets() {
                out[i] = v;
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn read(text: &str, expand: bool) -> Result<CsrMatrix> {
        read_matrix_market(Cursor::new(text), Path::new("mem.mtx"), expand)
    }

    #[test]
    fn diagonal_file() {
        let m = read(
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 2.0\n2 2 3.0\n",
            false,
        )
        .unwrap();
        assert_eq!(m.to_dense(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn symmetric_expansion() {
        let text =
            "%%MatrixMarket matrix coordinate real symmetric\n% lower\n2 2 2\n1 1 1.0\n2 1 5.0\n";
        let m = read(text, true).unwrap();
        assert_eq!(m.get(0, 1), Some(5.0));
        assert_eq!(m.get(1, 0), Some(5.0));
        assert_eq!(m.nnz(), 3);
        let lower = read(text, false).unwrap();
        assert_eq!(lower.get(0, 1), None);
        assert_eq!(lower.nnz(), 2);
    }

    // Frozen against scipy.io.mmread(...).tocsr() on the same three entries:
    // [[2, 0], [0, 3]] with 2 stored values.
    #[test]
    fn duplicates_are_summed() {
        let m = read(
            "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n1 1 1.0\n2 2 3.0\n",
            false,
        )
        .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense(), vec![vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn rejects_complex_and_pattern_with_distinct_error() {
        for field in ["complex", "pattern"] {
            let text =
                format!("%%MatrixMarket matrix coordinate {field} general\n1 1 1\n1 1 1.0 0.0\n");
            match read(&text, false) {
                Err(Error::UnsupportedField(f)) => assert_eq!(f, field),
                other => panic!("expected UnsupportedField, got {other:?}"),
            }
        }
    }

    #[test]
    fn out_of_bounds_index() {
        let err = read(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            false,
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::IndexOutOfBounds {
                    row: 3,
                    line: 3,
                    ..
                }
            ),
            "{err}"
        );
        let err = read(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n0 1 1.0\n",
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::IndexOutOfBounds { .. }));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(read("", false), Err(Error::Parse { .. })));
        assert!(matches!(
            read("%%MatrixMarket tensor\n", false),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read(
                "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 1.0\n",
                false
            ),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            read(
                "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
                false
            ),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            read(
                "%%MatrixMarket matrix coordinate real skew-symmetric\n1 1 0\n",
                false
            ),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = CsrMatrix::from_triplets(
            3,
            3,
            [
                (0, 0, 0.1),
                (0, 2, -1.0 / 3.0),
                (1, 1, 1e-300),
                (2, 0, f64::MAX),
                (2, 2, 0.0),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let back = read(std::str::from_utf8(&buf).unwrap(), false).unwrap();
        assert_eq!(back.row_ptr(), m.row_ptr());
        assert_eq!(back.col_idx(), m.col_idx());
        let bits = |x: &CsrMatrix| x.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn vector_files() {
        let dir = tempfile::tempdir().unwrap();
        let arr = dir.path().join("b.mtx");
        std::fs::write(
            &arr,
            "%%MatrixMarket matrix array real general\n3 1\n1.5\n-2\n4e1\n",
        )
        .unwrap();
        assert_eq!(load_vector(&arr).unwrap(), vec![1.5, -2.0, 40.0]);
        let coo = dir.path().join("c.mtx");
        std::fs::write(
            &coo,
            "%%MatrixMarket matrix coordinate real general\n3 1 1\n2 1 7.0\n",
        )
        .unwrap();
        assert_eq!(load_vector(&coo).unwrap(), vec![0.0, 7.0, 0.0]);
        assert!(matches!(
            load_vector(dir.path().join("missing.mtx")),
            Err(Error::Io { .. })
        ));
    }
}
