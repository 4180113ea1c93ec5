//! File formats: Matrix Market (coordinate and array), edge-list CSV
//! (`src,dst,weight`, 0-based), geometry CSV (`id,lat,lon,alt`),
//! single-column signal CSV and JSON reports.
//!
//! Floats are written with 17 significant digits so that save/load is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{GeoPoint, Graph};
use crate::matrix::{Matrix, Storage};

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum MmSymmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Parses Matrix Market text. `origin` only labels error messages.
pub fn parse_matrix_market(text: &str, origin: &Path) -> Result<Matrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(origin, 1, "empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::parse(
            origin,
            1,
            format!("malformed Matrix Market header: {header:?}"),
        ));
    }
    let coordinate = match fields[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(Error::parse(origin, 1, format!("unsupported format {other:?}"))),
    };
    let pattern = match fields[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(Error::parse(origin, 1, format!("unsupported field {other:?}"))),
    };
    let symmetry = match fields[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        "skew-symmetric" => MmSymmetry::SkewSymmetric,
        other => return Err(Error::parse(origin, 1, format!("unsupported symmetry {other:?}"))),
    };

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) = body
        .next()
        .ok_or_else(|| Error::parse(origin, 2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(origin, size_line, format!("bad size line {size:?}: {e}")))?;
    let expected_len = if coordinate { 3 } else { 2 };
    if dims.len() != expected_len {
        return Err(Error::parse(
            origin,
            size_line,
            format!("size line needs {expected_len} integers"),
        ));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if rows != cols {
        return Err(Error::parse(
            origin,
            size_line,
            format!("matrix is {rows}x{cols}, expected square"),
        ));
    }
    let n = rows;

    let mut triplets = Vec::new();
    let mut push = |i: usize, j: usize, v: f64| {
        triplets.push((i, j, v));
        if i != j {
            match symmetry {
                MmSymmetry::General => {}
                MmSymmetry::Symmetric => triplets.push((j, i, v)),
                MmSymmetry::SkewSymmetric => triplets.push((j, i, -v)),
            }
        }
    };

    if coordinate {
        let nnz = dims[2];
        let mut count = 0;
        for (line_no, line) in body {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if toks.len() != want {
                return Err(Error::parse(
                    origin,
                    line_no,
                    format!("expected {want} fields, got {}", toks.len()),
                ));
            }
            let idx = |t: &str| -> Result<usize> {
                let k: usize = t
                    .parse()
                    .map_err(|_| Error::parse(origin, line_no, format!("non-numeric index {t:?}")))?;
                if k == 0 || k > n {
                    return Err(Error::parse(origin, line_no, format!("index {k} outside 1..={n}")));
                }
                Ok(k - 1)
            };
            let (i, j) = (idx(toks[0])?, idx(toks[1])?);
            let v = if pattern {
                1.0
            } else {
                parse_value(toks[2], origin, line_no)?
            };
            push(i, j, v);
            count += 1;
        }
        if count != nnz {
            return Err(Error::parse(
                origin,
                size_line,
                format!("size line declares {nnz} entries, found {count}"),
            ));
        }
    } else {
        // Column-major; symmetric variants store the lower triangle only.
        let positions: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .filter(|&(i, j)| match symmetry {
                MmSymmetry::General => true,
                MmSymmetry::Symmetric => i >= j,
                MmSymmetry::SkewSymmetric => i > j,
            })
            .collect();
        let mut k = 0;
        for (line_no, line) in body {
            for tok in line.split_whitespace() {
                let v = parse_value(tok, origin, line_no)?;
                let &(i, j) = positions
                    .get(k)
                    .ok_or_else(|| Error::parse(origin, line_no, "more values than the declared size"))?;
                if v != 0.0 {
                    push(i, j, v);
                }
                k += 1;
            }
        }
        if k != positions.len() {
            return Err(Error::parse(
                origin,
                size_line,
                format!("expected {} values, found {k}", positions.len()),
            ));
        }
    }
    Matrix::from_triplets(n, triplets, Storage::auto(n))
}

fn parse_value(tok: &str, origin: &Path, line: u64) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(origin, line, format!("non-numeric value {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(origin, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

pub fn read_matrix_market(path: &Path) -> Result<Matrix> {
    parse_matrix_market(&read_to_string(path)?, path)
}

/// Coordinate/real/general text with 1-based indices.
pub fn format_matrix_market(m: &Matrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let n = m.n();
    let _ = writeln!(out, "{n} {n} {}", m.nnz());
    for (i, j, v) in m.triplets() {
        let _ = writeln!(out, "{} {} {}", i + 1, j + 1, fmt_f64(v));
    }
    out
}

pub fn write_matrix_market(path: &Path, m: &Matrix) -> Result<()> {
    write_string(path, &format_matrix_market(m))
}

/// 1-based line of a record. The reader skips blank lines without counting
/// them, so the line is recovered from the byte offset instead.
fn csv_line(text: &str, pos: Option<&csv::Position>) -> u64 {
    pos.map_or(0, |p| {
        // The recorded offset can sit before skipped blank lines.
        let bytes = text.as_bytes();
        let mut end = (p.byte() as usize).min(bytes.len());
        while end < bytes.len() && matches!(bytes[end], b'\n' | b'\r') {
            end += 1;
        }
        bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64 + 1
    })
}

fn csv_error(text: &str, path: &Path, e: csv::Error) -> Error {
    let line = csv_line(text, e.position());
    Error::parse(path, line, e.to_string())
}

fn check_header(text: &str, path: &Path, rdr: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| csv_error(text, path, e))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// Edge list with header `src,dst,weight`. Vertex count is `max id + 1` unless
/// `n_vertices` is given. Weights must be nonnegative; zero weights are dropped.
pub fn parse_edge_list(text: &str, origin: &Path, n_vertices: Option<usize>) -> Result<Graph> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(text, origin, &mut rdr, &["src", "dst", "weight"])?;
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut max_id = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(text, origin, e))?;
        let rec_line = csv_line(text, rec.position());
        let id = |t: &str, what: &str| -> Result<usize> {
            t.parse()
                .map_err(|_| Error::parse(origin, rec_line, format!("{what} {t:?} is not a vertex id")))
        };
        let (src, dst) = (id(&rec[0], "src")?, id(&rec[1], "dst")?);
        let w = parse_value(&rec[2], origin, rec_line)?;
        if w < 0.0 {
            return Err(Error::parse(
                origin,
                rec_line,
                format!("negative weight {w} on edge ({src}, {dst})"),
            ));
        }
        if !seen.insert((src, dst)) {
            return Err(Error::parse(origin, rec_line, format!("duplicate edge ({src}, {dst})")));
        }
        max_id = Some(max_id.unwrap_or(0).max(src).max(dst));
        edges.push((src, dst, w));
    }
    let n = match (n_vertices, max_id) {
        (Some(n), Some(m)) if m >= n => {
            return Err(Error::invalid(format!("vertex id {m} exceeds vertex count {n}")));
        }
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(Error::parse(origin, 1, "edge list is empty")),
    };
    Graph::from_edges(n, edges)
}

pub fn read_edge_list(path: &Path, n_vertices: Option<usize>) -> Result<Graph> {
    parse_edge_list(&read_to_string(path)?, path, n_vertices)
}

pub fn format_edge_list(graph: &Graph) -> String {
    let mut out = String::from("src,dst,weight\n");
    for (src, dst, w) in graph.edges() {
        let _ = writeln!(out, "{src},{dst},{}", fmt_f64(w));
    }
    out
}

pub fn write_edge_list(path: &Path, graph: &Graph) -> Result<()> {
    write_string(path, &format_edge_list(graph))
}

/// Loads a weight matrix from `.mtx` (as stored) or `.csv` (edge list).
pub fn read_weight_matrix(path: &Path) -> Result<Matrix> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("csv") => Ok(read_edge_list(path, None)?.into_weights()),
        _ => read_matrix_market(path),
    }
}

/// Geometry with header `id,lat,lon,alt`; ids must be exactly `0..n`.
pub fn parse_geometry(text: &str, origin: &Path) -> Result<Vec<GeoPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    check_header(text, origin, &mut rdr, &["id", "lat", "lon", "alt"])?;
    let mut rows: Vec<(usize, GeoPoint, u64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(text, origin, e))?;
        let line = csv_line(text, rec.position());
        let id: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("id {:?} is not a vertex id", &rec[0])))?;
        let p = GeoPoint {
            lat: parse_value(&rec[1], origin, line)?,
            lon: parse_value(&rec[2], origin, line)?,
            alt: parse_value(&rec[3], origin, line)?,
        };
        rows.push((id, p, line));
    }
    let n = rows.len();
    let mut out = vec![None; n];
    for (id, p, line) in rows {
        if id >= n || out[id].is_some() {
            return Err(Error::parse(
                origin,
                line,
                format!("ids must be a permutation of 0..{n}, found {id}"),
            ));
        }
        out[id] = Some(p);
    }
    Ok(out.into_iter().map(|p| p.expect("all ids present")).collect())
}

pub fn read_geometry(path: &Path) -> Result<Vec<GeoPoint>> {
    parse_geometry(&read_to_string(path)?, path)
}

/// Single-column CSV of numbers. A non-numeric first line is taken as a header.
pub fn parse_signal(text: &str, origin: &Path) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if t.contains(',') {
            return Err(Error::parse(origin, line_no, "expected a single column"));
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => return Err(Error::parse(origin, line_no, format!("non-finite value {t:?}"))),
            Err(_) if values.is_empty() && i == 0 => {}
            Err(_) => return Err(Error::parse(origin, line_no, format!("non-numeric value {t:?}"))),
        }
    }
    if values.is_empty() {
        return Err(Error::parse(origin, 1, "no values"));
    }
    Ok(values)
}

pub fn read_signal(path: &Path) -> Result<Vec<f64>> {
    parse_signal(&read_to_string(path)?, path)
}

pub fn format_signal(values: &[f64]) -> String {
    let mut out = String::from("value\n");
    for v in values {
        out.push_str(&fmt_f64(*v));
        out.push('\n');
    }
    out
}

pub fn write_signal(path: &Path, values: &[f64]) -> Result<()> {
    write_string(path, &format_signal(values))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_string(path, &to_json(value)?)
}
