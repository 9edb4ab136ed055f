//! MatrixMarket coordinate export/import for symmetric matrices, for
//! cross-checking assembled operators against external tools.

use super::{CooBuilder, CsrMatrix, LinalgError};
use std::io::{BufRead, Write};

const HEADER: &str = "%%MatrixMarket matrix coordinate real symmetric";

/// Writes the lower triangle of a symmetric matrix in coordinate format
/// (1-based indices).
pub fn write_symmetric_matrix_market(m: &CsrMatrix, out: &mut impl Write) -> Result<(), LinalgError> {
    m.ensure_symmetric(1e-12)?;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..m.n_rows() {
        let (cols, vals) = m.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if *c <= i {
                entries.push((i, *c, *v));
            }
        }
    }
    writeln!(out, "{HEADER}")?;
    writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

/// Reads a symmetric coordinate MatrixMarket file, mirroring off-diagonal
/// entries into both triangles.
pub fn read_symmetric_matrix_market(input: &mut impl BufRead) -> Result<CsrMatrix, LinalgError> {
    let mut lines = input.lines().enumerate();
    let (line_no, header) = lines
        .next()
        .ok_or(LinalgError::MatrixMarket { line: 1, message: "empty input".into() })?;
    let header = header?;
    if header.trim() != HEADER {
        return Err(LinalgError::MatrixMarket {
            line: line_no + 1,
            message: format!("expected header `{HEADER}`, got `{}`", header.trim()),
        });
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut builder: Option<CooBuilder> = None;
    let mut seen = 0usize;
    for (line_no, line) in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(LinalgError::MatrixMarket {
                        line: line_no + 1,
                        message: "size line must have three fields".into(),
                    });
                }
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|_| LinalgError::MatrixMarket {
                        line: line_no + 1,
                        message: format!("bad integer `{s}`"),
                    })
                };
                let (r, c, nnz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                if r != c {
                    return Err(LinalgError::MatrixMarket {
                        line: line_no + 1,
                        message: "symmetric matrix must be square".into(),
                    });
                }
                dims = Some((r, c, nnz));
                builder = Some(CooBuilder::new(r, c));
            }
            Some((r, c, _)) => {
                if fields.len() != 3 {
                    return Err(LinalgError::MatrixMarket {
                        line: line_no + 1,
                        message: "entry line must have three fields".into(),
                    });
                }
                let i: usize = fields[0].parse().map_err(|_| LinalgError::MatrixMarket {
                    line: line_no + 1,
                    message: format!("bad row index `{}`", fields[0]),
                })?;
                let j: usize = fields[1].parse().map_err(|_| LinalgError::MatrixMarket {
                    line: line_no + 1,
                    message: format!("bad column index `{}`", fields[1]),
                })?;
                let v: f64 = fields[2].parse().map_err(|_| LinalgError::MatrixMarket {
                    line: line_no + 1,
                    message: format!("bad value `{}`", fields[2]),
                })?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(LinalgError::MatrixMarket {
                        line: line_no + 1,
                        message: format!("index ({i}, {j}) out of range"),
                    });
                }
                let b = builder.as_mut().unwrap();
                b.push(i - 1, j - 1, v);
                if i != j {
                    b.push(j - 1, i - 1, v);
                }
                seen += 1;
            }
        }
    }
    match dims {
        Some((_, _, nnz)) if seen == nnz => Ok(builder.unwrap().build()),
        Some((_, _, nnz)) => Err(LinalgError::MatrixMarket {
            line: 0,
            message: format!("expected {nnz} entries, found {seen}"),
        }),
        None => Err(LinalgError::MatrixMarket { line: 0, message: "missing size line".into() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_exact_header() {
        let mut b = CooBuilder::new(3, 3);
        b.push(0, 0, 2.0);
        b.push(1, 0, -1.0);
        b.push(0, 1, -1.0);
        b.push(1, 1, 2.0);
        b.push(2, 2, 1.5);
        let m = b.build();

        let mut bytes = Vec::new();
        write_symmetric_matrix_market(&m, &mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n"));

        let back = read_symmetric_matrix_market(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.n_rows(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(back.get(i, j), m.get(i, j));
            }
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let data = b"%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n";
        let err = read_symmetric_matrix_market(&mut data.as_slice()).unwrap_err();
        assert!(matches!(err, LinalgError::MatrixMarket { line: 1, .. }));
    }

    #[test]
    fn rejects_asymmetric_export() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        let m = b.build();
        let mut bytes = Vec::new();
        assert!(write_symmetric_matrix_market(&m, &mut bytes).is_err());
    }
}
