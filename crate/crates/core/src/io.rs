//! Matrix Market and headerless CSV readers/writers.
//!
//! Writers print 17 significant digits, which round-trips every finite `f64`
//! exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
}

impl MatrixFormat {
    /// `.mtx` / `.mm` are Matrix Market, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "mtx" || ext == "mm" => MatrixFormat::MatrixMarket,
            _ => MatrixFormat::Csv,
        }
    }
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    match MatrixFormat::from_path(path) {
        MatrixFormat::MatrixMarket => parse_matrix_market(&text),
        MatrixFormat::Csv => parse_csv(&text),
    }
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let text = match MatrixFormat::from_path(path) {
        MatrixFormat::MatrixMarket => to_matrix_market(m),
        MatrixFormat::Csv => to_csv(m),
    };
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Array,
    Coordinate,
}

#[derive(Clone, Copy, PartialEq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parses Matrix Market `array` or `coordinate` data with `real`, `integer`
/// or `pattern` fields and `general`, `symmetric` or `skew-symmetric` storage.
pub fn parse_matrix_market(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(parse_err(1, format!("unsupported layout '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" if layout == Layout::Coordinate => Field::Pattern,
        other => return Err(parse_err(1, format!("unsupported field '{other}'"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut data = lines.map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('%'));

    let (size_line, size) = data.next().ok_or_else(|| parse_err(1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(size_line, format!("bad size token '{t}'"))))
        .collect::<Result<_>>()?;
    let expected = if layout == Layout::Array { 2 } else { 3 };
    if dims.len() != expected {
        return Err(parse_err(size_line, "wrong number of size fields"));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if rows == 0 || cols == 0 {
        return Err(parse_err(size_line, "matrix dimensions must be positive"));
    }
    if symmetry != Symmetry::General && rows != cols {
        return Err(parse_err(size_line, "symmetric storage requires a square matrix"));
    }
    let mut m = Matrix::zeros((rows, cols));

    let parse_value = |line: usize, tok: Option<&str>| -> Result<f64> {
        let tok = tok.ok_or_else(|| parse_err(line, "missing value"))?;
        let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("bad value '{tok}'")))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite value '{tok}'")));
        }
        if field == Field::Integer && v.fract() != 0.0 {
            return Err(parse_err(line, format!("non-integer value '{tok}'")));
        }
        Ok(v)
    };
    let mirror = |m: &mut Matrix, i: usize, j: usize, v: f64| match symmetry {
        Symmetry::General => {}
        Symmetry::Symmetric => m[[j, i]] = v,
        Symmetry::SkewSymmetric => m[[j, i]] = -v,
    };

    match layout {
        Layout::Array => {
            // Column-major; symmetric variants store the lower triangle only.
            let positions: Vec<(usize, usize)> = (0..cols)
                .flat_map(|j| {
                    let start = match symmetry {
                        Symmetry::General => 0,
                        Symmetry::Symmetric => j,
                        Symmetry::SkewSymmetric => j + 1,
                    };
                    (start..rows).map(move |i| (i, j))
                })
                .collect();
            let mut count = 0;
            for (line, l) in data {
                for tok in l.split_whitespace() {
                    let &(i, j) =
                        positions.get(count).ok_or_else(|| parse_err(line, "more entries than the declared size"))?;
                    let v = parse_value(line, Some(tok))?;
                    m[[i, j]] = v;
                    if i != j {
                        mirror(&mut m, i, j, v);
                    }
                    count += 1;
                }
            }
            if count != positions.len() {
                return Err(parse_err(size_line, format!("expected {} entries, found {count}", positions.len())));
            }
        }
        Layout::Coordinate => {
            let nnz = dims[2];
            let mut count = 0;
            for (line, l) in data {
                let mut toks = l.split_whitespace();
                let mut index = |name: &str, bound: usize| -> Result<usize> {
                    let t = toks.next().ok_or_else(|| parse_err(line, format!("missing {name} index")))?;
                    let idx: usize = t.parse().map_err(|_| parse_err(line, format!("bad {name} index '{t}'")))?;
                    if idx == 0 || idx > bound {
                        return Err(parse_err(line, format!("{name} index {idx} out of range")));
                    }
                    Ok(idx - 1)
                };
                let i = index("row", rows)?;
                let j = index("column", cols)?;
                let v = if field == Field::Pattern { 1.0 } else { parse_value(line, toks.next())? };
                m[[i, j]] += v;
                if i != j {
                    mirror(&mut m, i, j, v);
                }
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(size_line, format!("expected {nnz} entries, found {count}")));
            }
        }
    }
    Ok(m)
}

/// Dense `array real general` Matrix Market text.
pub fn to_matrix_market(m: &Matrix) -> String {
    let (rows, cols) = m.dim();
    let mut out = String::with_capacity(rows * cols * 26 + 64);
    out.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{rows} {cols}");
    for j in 0..cols {
        for i in 0..rows {
            let _ = writeln!(out, "{:.16e}", m[[i, j]]);
        }
    }
    out
}

/// Headerless comma-separated rows. Blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<Matrix> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok.parse().map_err(|_| parse_err(i + 1, format!("bad value '{tok}'")))?;
            if !v.is_finite() {
                return Err(parse_err(i + 1, format!("non-finite value '{tok}'")));
            }
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(parse_err(i + 1, format!("expected {c} columns, found {n}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Empty("csv contains no rows".into()))?;
    let m = Matrix::from_shape_vec((rows, cols), values).map_err(|e| Error::Shape(e.to_string()))?;
    ensure_finite(&m)?;
    Ok(m)
}

pub fn to_csv(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.len() * 25);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    out
}
