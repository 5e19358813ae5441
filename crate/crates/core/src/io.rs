//! Plain-text file formats and atomic writes.
//!
//! Predictors and Euclidean responses are headerless CSV, one row per
//! observation. Other response files start with a one-line header:
//!
//! * `grid=G`: quantile grids, `G` values per row;
//! * `spd m=M`: SPD matrices, `M*M` row-major values per row;
//! * `simplex C=C`: probability vectors, `C` values per row;
//! * `distance-matrix`: a precomputed `n x n` distance matrix.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::{DistanceMatrix, Metric, ResponseSet, Responses, SpdMatrix};

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Parses numeric CSV rows ; lines carry their 1-based numbers.
fn parse_rows<'a>(
    path: &Path,
    lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line_no, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let field = field.trim();
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, line_no, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(path, line_no, format!("non-finite value `{field}`")));
            }
            values.push(v);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_error(path, line_no, format!("expected {w} fields, found {count}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_error(path, 1, "no data rows"))?;
    Array2::from_shape_vec((rows, width), values).map_err(|e| Error::Shape(e.to_string()))
}

/// Reads a headerless numeric CSV file.
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_rows(path, text.lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn header_value(path: &Path, header: &str, key: &str) -> Result<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key))
        .and_then(|v| v.parse().ok())
        .filter(|&v: &usize| v > 0)
        .ok_or_else(|| parse_error(path, 1, format!("header `{header}` lacks a positive `{key}` value")))
}

/// Reads a response file, detecting its kind from the header line.
/// `metric` overrides the kind's default metric (Euclidean, Wasserstein-2,
/// log-Cholesky, Hellinger or precomputed).
pub fn read_responses(path: &Path, metric: Option<Metric>) -> Result<ResponseSet> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("").trim().to_string();
    let body = || text.lines().enumerate().skip(1).map(|(i, l)| (i + 1, l));
    let check_width = |a: &Array2<f64>, want: usize| {
        if a.ncols() != want {
            Err(parse_error(path, 2, format!("header declares {want} values per row, found {}", a.ncols())))
        } else {
            Ok(())
        }
    };
    let (responses, default) = if first.starts_with("grid=") {
        let g = header_value(path, &first, "grid=")?;
        let a = parse_rows(path, body())?;
        check_width(&a, g)?;
        (Responses::QuantileGrids(a), Metric::Wasserstein2)
    } else if first.starts_with("spd") {
        let m = header_value(path, &first, "m=")?;
        let a = parse_rows(path, body())?;
        check_width(&a, m * m)?;
        let mats = a
            .outer_iter()
            .enumerate()
            .map(|(i, row)| {
                let mat = Array2::from_shape_vec((m, m), row.to_vec()).expect("width checked");
                SpdMatrix::new(mat).map_err(|e| parse_error(path, i + 2, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        (Responses::SpdMatrices(mats), Metric::LogCholesky)
    } else if first.starts_with("simplex") {
        let c = header_value(path, &first, "C=")?;
        let a = parse_rows(path, body())?;
        check_width(&a, c)?;
        (Responses::ProbabilityVectors(a), Metric::Hellinger)
    } else if first == "distance-matrix" {
        let a = parse_rows(path, body())?;
        let d = DistanceMatrix::new(a).map_err(|e| parse_error(path, 2, e.to_string()))?;
        (Responses::Precomputed(d), Metric::Precomputed)
    } else {
        let a = parse_rows(path, text.lines().enumerate().map(|(i, l)| (i + 1, l)))?;
        (Responses::EuclideanVectors(a), Metric::Euclidean)
    };
    ResponseSet::new(responses, metric.unwrap_or(default))
}

/// CSV text for a matrix, floats in shortest round-trip form.
pub fn matrix_csv(a: &Array2<f64>, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(h);
        out.push('\n');
    }
    for row in a.outer_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<()> {
    write_atomic(path, matrix_csv(a, None).as_bytes())
}

pub fn write_responses(path: &Path, responses: &ResponseSet) -> Result<()> {
    let text = match responses.responses() {
        Responses::EuclideanVectors(a) => matrix_csv(a, None),
        Responses::QuantileGrids(a) => matrix_csv(a, Some(&format!("grid={}", a.ncols()))),
        Responses::ProbabilityVectors(a) => matrix_csv(a, Some(&format!("simplex C={}", a.ncols()))),
        Responses::SpdMatrices(mats) => {
            let m = mats.first().map_or(1, |s| s.order());
            let flat = Array2::from_shape_fn((mats.len(), m * m), |(i, k)| mats[i].view()[[k / m, k % m]]);
            matrix_csv(&flat, Some(&format!("spd m={m}")))
        }
        Responses::Precomputed(d) => matrix_csv(&d.view().to_owned(), Some("distance-matrix")),
    };
    write_atomic(path, text.as_bytes())
}
