//! Matrix Market coordinate-format I/O for [`CscMatrix`].
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! write/read round-trips are bit exact.

use std::io::{BufRead, Write};

use super::csc::CscMatrix;
use super::SparseError;

/// Write `a` in `%%MatrixMarket matrix coordinate real general` form
/// (1-based indices).
pub fn write_matrix_market<W: Write>(a: &CscMatrix, out: &mut W) -> Result<(), SparseError> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
    }
    Ok(())
}

/// Read a real, general, coordinate-format Matrix Market file.
pub fn read_matrix_market<R: BufRead>(input: R) -> Result<CscMatrix, SparseError> {
    let mut lines = input.lines().enumerate();

    let (lineno, header) = lines
        .next()
        .ok_or(SparseError::Format { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5
        || fields[0] != "%%MatrixMarket"
        || fields[1] != "matrix"
        || fields[2] != "coordinate"
        || fields[3] != "real"
        || fields[4] != "general"
    {
        return Err(SparseError::Format {
            line: lineno + 1,
            msg: format!("unsupported header `{header}` (need matrix coordinate real general)"),
        });
    }

    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (lineno0, line) in lines {
        let line = line?;
        let lineno = lineno0 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(SparseError::Format {
                        line: lineno,
                        msg: "size line must be `nrows ncols nnz`".into(),
                    });
                }
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|_| SparseError::Format {
                        line: lineno,
                        msg: format!("invalid integer `{s}`"),
                    })
                };
                dims = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
            }
            Some((nrows, ncols, _)) => {
                if fields.len() != 3 {
                    return Err(SparseError::Format {
                        line: lineno,
                        msg: "entry line must be `row col value`".into(),
                    });
                }
                let r: usize = fields[0].parse().map_err(|_| SparseError::Format {
                    line: lineno,
                    msg: format!("invalid row index `{}`", fields[0]),
                })?;
                let c: usize = fields[1].parse().map_err(|_| SparseError::Format {
                    line: lineno,
                    msg: format!("invalid col index `{}`", fields[1]),
                })?;
                let v: f64 = fields[2].parse().map_err(|_| SparseError::Format {
                    line: lineno,
                    msg: format!("invalid value `{}`", fields[2]),
                })?;
                if r == 0 || c == 0 || r > nrows || c > ncols {
                    return Err(SparseError::Format {
                        line: lineno,
                        msg: format!("index ({r}, {c}) out of bounds (1-based)"),
                    });
                }
                triplets.push((r - 1, c - 1, v));
            }
        }
    }
    let (nrows, ncols, nnz) = dims.ok_or(SparseError::Format {
        line: 0,
        msg: "missing size line".into(),
    })?;
    if triplets.len() != nnz {
        return Err(SparseError::Format {
            line: 0,
            msg: format!("expected {nnz} entries, found {}", triplets.len()),
        });
    }
    CscMatrix::from_triplets(nrows, ncols, &triplets)
}
