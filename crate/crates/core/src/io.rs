//! MatrixMarket coordinate files and JSON debug dumps.
//!
//! Only the `matrix coordinate real general` flavor is handled. Indices are
//! 1-based on disk and 0-based in memory. The emitter writes entries in
//! storage order, one per line, so parse/emit round-trips are byte-stable
//! modulo whitespace.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{CsrMatrix, SparseTensorMatrix};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Reads a MatrixMarket coordinate file.
pub fn load_matrix_market<T: Scalar>(path: impl AsRef<Path>) -> Result<SparseTensorMatrix<T>> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text)
}

/// Parses MatrixMarket coordinate text. Errors carry the 1-based line number.
pub fn parse_matrix_market<T: Scalar>(text: &str) -> Result<SparseTensorMatrix<T>> {
    let mut lines = text.lines().enumerate();

    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let expected: Vec<&str> = HEADER.split_whitespace().collect();
    if fields != expected {
        return Err(parse_err(
            header_line + 1,
            format!("unsupported header {header:?}; expected {HEADER:?}"),
        ));
    }

    // Size line: first non-comment, non-blank line after the header.
    let (size_line_no, size_line) = lines
        .by_ref()
        .find(|(_, l)| !is_skippable(l))
        .ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(size_line_no + 1, format!("bad size token {t:?}")))
        })
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(
            size_line_no + 1,
            "size line must be `rows cols nnz`",
        ));
    };

    let mut triples = Vec::with_capacity(nnz);
    let mut seen = HashSet::with_capacity(nnz);
    for (idx, line) in lines {
        if is_skippable(line) {
            continue;
        }
        let line_no = idx + 1;
        if triples.len() == nnz {
            return Err(parse_err(
                line_no,
                "more entries than the size line declared",
            ));
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [r, c, v] = toks[..] else {
            return Err(parse_err(line_no, "entry must be `row col value`"));
        };
        let r: usize = r
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad row index {r:?}")))?;
        let c: usize = c
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad column index {c:?}")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad value {v:?}")))?;
        if r == 0 || c == 0 || r > rows || c > cols {
            return Err(parse_err(
                line_no,
                format!("index ({r}, {c}) outside 1..={rows} x 1..={cols}"),
            ));
        }
        if !seen.insert((r, c)) {
            return Err(parse_err(
                line_no,
                format!("duplicate coordinate ({r}, {c})"),
            ));
        }
        triples.push((r - 1, c - 1, T::from_f64(v)));
    }
    if triples.len() != nnz {
        return Err(parse_err(
            text.lines().count(),
            format!("expected {nnz} entries, found {}", triples.len()),
        ));
    }

    SparseTensorMatrix::from_triples(rows, cols, &triples)
}

/// Renders a matrix as MatrixMarket coordinate text, entries in storage
/// order. Values print in shortest round-trip form with an explicit decimal
/// point, so emitted files re-parse to the identical matrix and re-emit to
/// identical bytes.
pub fn to_matrix_market<T: Scalar>(a: &SparseTensorMatrix<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "{} {} {}", a.rows(), a.cols(), a.nnz());
    for (r, c, v) in a.iter() {
        let _ = writeln!(out, "{} {} {:?}", r + 1, c + 1, v);
    }
    out
}

/// Writes a matrix to a MatrixMarket coordinate file.
pub fn save_matrix_market<T: Scalar>(
    path: impl AsRef<Path>,
    a: &SparseTensorMatrix<T>,
) -> Result<()> {
    fs::write(path, to_matrix_market(a))?;
    Ok(())
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('%')
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Debug dump: `{rows, cols, triples: [[r, c, v], ...]}`.
pub trait MatrixJson {
    fn to_json(&self) -> serde_json::Value;
}

impl<T: Scalar> MatrixJson for SparseTensorMatrix<T> {
    fn to_json(&self) -> serde_json::Value {
        triples_json(self.rows(), self.cols(), self.iter())
    }
}

impl<T: Scalar> MatrixJson for CsrMatrix<T> {
    fn to_json(&self) -> serde_json::Value {
        triples_json(self.rows(), self.cols(), self.iter())
    }
}

impl<T: Scalar> MatrixJson for DenseMatrix<T> {
    fn to_json(&self) -> serde_json::Value {
        let nonzero = (0..self.rows()).flat_map(|r| {
            (0..self.cols()).filter_map(move |c| {
                let v = self[(r, c)];
                (v != T::default()).then_some((r, c, v))
            })
        });
        triples_json(self.rows(), self.cols(), nonzero)
    }
}

fn triples_json<T: Scalar>(
    rows: usize,
    cols: usize,
    it: impl Iterator<Item = (usize, usize, T)>,
) -> serde_json::Value {
    let triples: Vec<serde_json::Value> = it.map(|(r, c, v)| json!([r, c, v.to_f64()])).collect();
    json!({ "rows": rows, "cols": cols, "triples": triples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_file() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 2.0\n";
        let a = parse_matrix_market::<f32>(text).unwrap();
        assert_eq!((a.rows(), a.cols(), a.nnz()), (2, 2, 1));
        assert_eq!(a.entry(0), (0, 1, 2.0));
    }

    #[test]
    fn parses_empty_entry_list() {
        let text = "%%MatrixMarket matrix coordinate real general\n3 3 0\n";
        let a = parse_matrix_market::<f32>(text).unwrap();
        assert_eq!((a.rows(), a.cols(), a.nnz()), (3, 3, 0));
    }

    #[test]
    fn rejects_duplicate_coordinate() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.0\n1 2 3.0\n";
        let err = parse_matrix_market::<f32>(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn rejects_out_of_range_index() {
        let text = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(matches!(
            parse_matrix_market::<f32>(text),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn rejects_bad_header() {
        let text = "%%MatrixMarket matrix array real general\n2 2 1\n1 1 1.0\n";
        assert!(matches!(
            parse_matrix_market::<f32>(text),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let text = "%%MatrixMarket matrix coordinate real general\n% a comment\n\n2 2 1\n% another\n1 1 0.5\n";
        let a = parse_matrix_market::<f32>(text).unwrap();
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn emit_parse_round_trip() {
        let a = crate::sparse::random_sparse::<f32>(12, 3, 5, true).unwrap();
        let text = to_matrix_market(&a);
        let b = parse_matrix_market::<f32>(&text).unwrap();
        assert_eq!(a, b);
        // Emitting the parse result reproduces the bytes.
        assert_eq!(text, to_matrix_market(&b));
    }

    #[test]
    fn parse_is_whitespace_insensitive() {
        let tight = "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 2.5\n";
        let loose =
            "%%MatrixMarket  matrix   coordinate real general\n 2  2  1 \n  1   2   2.5  \n";
        let a = parse_matrix_market::<f32>(tight).unwrap();
        let b = parse_matrix_market::<f32>(loose).unwrap();
        assert_eq!(a, b);
        let norm = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        assert_eq!(norm(tight), norm(loose));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        let a = crate::sparse::random_sparse::<f64>(8, 2, 11, true).unwrap();
        save_matrix_market(&path, &a).unwrap();
        let b = load_matrix_market::<f64>(&path).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_dump_shape() {
        let a = SparseTensorMatrix::<f32>::from_triples(2, 3, &[(0, 1, 2.0)]).unwrap();
        let v = a.to_json();
        assert_eq!(v["rows"], 2);
        assert_eq!(v["cols"], 3);
        assert_eq!(v["triples"][0][1], 1);
    }
}
