//! Matrix Market coordinate I/O plus a plain-text vector format.
//!
//! Supported header: `%%MatrixMarket matrix coordinate real general` or
//! `... symmetric`. Symmetric files store the lower triangle and are
//! mirrored on read. Vectors are written one value per line with `%` comment
//! lines, so they can be inspected and diffed directly.

use std::io::{BufRead, Write};

use super::SparseMatrix;
use crate::error::{Error, Result};

/// Storage symmetry declared in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarketSymmetry {
    General,
    Symmetric,
}

/// Writes a matrix in coordinate format. With [`MarketSymmetry::Symmetric`]
/// only the lower triangle is written and the matrix must actually be
/// symmetric.
pub fn write_matrix<W: Write>(
    out: &mut W,
    a: &SparseMatrix,
    symmetry: MarketSymmetry,
) -> Result<()> {
    if symmetry == MarketSymmetry::Symmetric && !a.is_symmetric(1e-12) {
        return Err(Error::Config(
            "refusing to write a nonsymmetric matrix with a symmetric header".into(),
        ));
    }
    let kind = match symmetry {
        MarketSymmetry::General => "general",
        MarketSymmetry::Symmetric => "symmetric",
    };
    writeln!(out, "%%MatrixMarket matrix coordinate real {kind}")?;
    let mut entries = Vec::new();
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if symmetry == MarketSymmetry::Symmetric && j > i {
                continue;
            }
            entries.push((i, j, v));
        }
    }
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), entries.len())?;
    for (i, j, v) in entries {
        // The shortest round-trip representation keeps files exact.
        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a coordinate-format matrix, mirroring the lower triangle when the
/// header declares symmetry.
pub fn read_matrix<R: BufRead>(input: R) -> Result<SparseMatrix> {
    let mut lines = input.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Parse("empty matrix market file".into())),
        }
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5
        || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket")
        || !tokens[1].eq_ignore_ascii_case("matrix")
        || !tokens[2].eq_ignore_ascii_case("coordinate")
        || !tokens[3].eq_ignore_ascii_case("real")
    {
        return Err(Error::Parse(format!("unsupported header: {header}")));
    }
    let symmetry = if tokens[4].eq_ignore_ascii_case("general") {
        MarketSymmetry::General
    } else if tokens[4].eq_ignore_ascii_case("symmetric") {
        MarketSymmetry::Symmetric
    } else {
        return Err(Error::Parse(format!("unsupported symmetry: {}", tokens[4])));
    };

    let mut size_line = None;
    for line in &mut lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        size_line = Some(line);
        break;
    }
    let size_line = size_line.ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad size line: {size_line}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Parse(format!("bad size line: {size_line}")));
    }
    let (nrows, ncols, nnz) = (dims[0], dims[1], dims[2]);

    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!("bad entry line: {line}")));
        }
        let i: usize = parts[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad row index: {line}")))?;
        let j: usize = parts[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad column index: {line}")))?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad value: {line}")))?;
        if i == 0 || j == 0 || i > nrows || j > ncols {
            return Err(Error::Parse(format!(
                "entry ({i}, {j}) out of bounds for {nrows}x{ncols}"
            )));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetry == MarketSymmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
    }
    if triplets.len() < nnz {
        return Err(Error::Parse(format!(
            "expected {nnz} entries, found {}",
            triplets.len()
        )));
    }
    SparseMatrix::from_triplets(nrows, ncols, &triplets)
}

/// Writes a vector, one value per line, preceded by a `%` comment naming it.
pub fn write_vector<W: Write>(out: &mut W, name: &str, v: &[f64]) -> Result<()> {
    writeln!(out, "% vector {name} length {}", v.len())?;
    for x in v {
        writeln!(out, "{x}")?;
    }
    Ok(())
}

/// Reads a vector written by [`write_vector`] (comment lines are skipped).
pub fn read_vector<R: BufRead>(input: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::Parse(format!("bad vector entry: {t}")))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    fn round_trip(a: &SparseMatrix, symmetry: MarketSymmetry) -> SparseMatrix {
        let mut buf = Vec::new();
        write_matrix(&mut buf, a, symmetry).unwrap();
        read_matrix(BufReader::new(&buf[..])).unwrap()
    }

    #[test]
    fn general_round_trip_is_exact() {
        let a = SparseMatrix::from_triplets(
            3,
            2,
            &[(0, 0, 1.5), (1, 1, -2.0 / 3.0), (2, 0, 1e-30)],
        )
        .unwrap();
        assert_eq!(round_trip(&a, MarketSymmetry::General), a);
    }

    #[test]
    fn symmetric_round_trip_mirrors_lower_triangle() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 2, -0.25),
                (2, 0, -0.25),
                (1, 1, 4.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &a, MarketSymmetry::Symmetric).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("symmetric"));
        // Only the lower triangle is stored: 4 entries, not 5.
        assert!(text.contains("3 3 4"));
        assert_eq!(read_matrix(BufReader::new(&buf[..])).unwrap(), a);
    }

    #[test]
    fn symmetric_writer_rejects_nonsymmetric_input() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        let mut buf = Vec::new();
        assert!(write_matrix(&mut buf, &a, MarketSymmetry::Symmetric).is_err());
    }

    #[test]
    fn reader_rejects_malformed_input() {
        for bad in [
            "",
            "%%MatrixMarket matrix array real general\n2 2\n1.0\n",
            "%%MatrixMarket matrix coordinate real hermitian\n1 1 1\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
        ] {
            assert!(
                read_matrix(BufReader::new(bad.as_bytes())).is_err(),
                "accepted malformed input: {bad:?}"
            );
        }
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "%%MatrixMarket matrix coordinate real general\n% a comment\n\n2 2 2\n1 1 3.0\n% mid-stream comment\n2 2 4.0\n";
        let a = read_matrix(BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 1), 4.0);
    }

    #[test]
    fn vector_round_trip() {
        let v = vec![1.0, -0.5, 1.0 / 3.0, 2e-40];
        let mut buf = Vec::new();
        write_vector(&mut buf, "rhs", &v).unwrap();
        assert_eq!(read_vector(BufReader::new(&buf[..])).unwrap(), v);
    }
}
