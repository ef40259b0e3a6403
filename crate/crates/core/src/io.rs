//! Text file formats for tensors and sample sets, tuning grids, and ingestion
//! of gridded CSV tables.
//!
//! ```text
//! TENSOR v1              SAMPLES v1
//! dims: 2 2              dims: 2 2
//! scale: 3 3             1 1 40.5
//! 1 2                    2 1 -7
//! 3 4
//! ```
//!
//! Tensor values are stored first index fastest; sample indices are 1-based.
//! Numbers are written in shortest round-trip form, so writing then reading
//! returns the same bits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Error, ParseErrorKind, Result};
use crate::rbf::Geometry;
use crate::samples::SampleSet;
use crate::tensor::{multi_index_of, offset_of, DenseTensor, MAX_ORDER};
use crate::tuning::Candidate;

pub const TENSOR_HEADER: &str = "TENSOR v1";
pub const SAMPLES_HEADER: &str = "SAMPLES v1";

/// Shortest decimal that parses back to exactly `v`.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// A tensor file: the tensor plus the optional per-mode cell size.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorFile {
    pub tensor: DenseTensor,
    pub scale: Option<Vec<f64>>,
}

impl TensorFile {
    /// Grid coordinates implied by the scale line (unit cells without one).
    pub fn geometry(&self) -> Result<Geometry> {
        match &self.scale {
            Some(s) => Geometry::from_scale(self.tensor.dims(), s),
            None => Ok(Geometry::unit(self.tensor.dims())),
        }
    }
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            iter: text.lines().enumerate(),
        }
    }

    /// Next line as `(1-based number, trimmed text)`.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        self.iter.next().map(|(i, l)| (i + 1, l.trim()))
    }

    fn err(&self, line: usize, kind: ParseErrorKind) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            kind,
        }
    }

    fn header(&mut self, expected: &'static str) -> Result<()> {
        match self.next_line() {
            Some((_, l)) if l == expected => Ok(()),
            Some((n, _)) => Err(self.err(n, ParseErrorKind::MissingHeader { expected })),
            None => Err(self.err(1, ParseErrorKind::MissingHeader { expected })),
        }
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let Some((n, l)) = self.next_line() else {
            return Err(self.err(2, ParseErrorKind::UnexpectedEof));
        };
        let bad = |msg: String| self.err(n, ParseErrorKind::BadDims(msg));
        let rest = l.strip_prefix("dims:").ok_or_else(|| bad(format!("expected `dims:`, found `{l}`")))?;
        let dims = rest
            .split_whitespace()
            .map(|tok| match tok.parse::<usize>() {
                Ok(d) if d > 0 => Ok(d),
                _ => Err(bad(format!("`{tok}` is not a positive integer"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if dims.is_empty() || dims.len() > MAX_ORDER {
            return Err(bad(format!("expected 1 to {MAX_ORDER} extents, found {}", dims.len())));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(bad("total size overflows".into()));
        }
        Ok(dims)
    }
}

fn parse_value(tok: &str) -> std::result::Result<f64, ParseErrorKind> {
    let v: f64 = tok.parse().map_err(|_| ParseErrorKind::BadNumber(tok.into()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ParseErrorKind::NonFinite(tok.into()))
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

pub fn parse_tensor(path: &Path, text: &str) -> Result<TensorFile> {
    let mut lines = Lines::new(path, text);
    lines.header(TENSOR_HEADER)?;
    let dims = lines.dims()?;
    let expected: usize = dims.iter().product();
    let mut scale = None;
    let mut values = Vec::with_capacity(expected);
    let mut last_line = 2;
    let mut first = true;
    while let Some((n, l)) = lines.next_line() {
        last_line = n;
        if first {
            first = false;
            if let Some(rest) = l.strip_prefix("scale:") {
                let s = rest
                    .split_whitespace()
                    .map(|tok| match tok.parse::<f64>() {
                        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
                        _ => Err(lines.err(n, ParseErrorKind::BadScale(format!("`{tok}` is not a positive number")))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                if s.len() != dims.len() {
                    return Err(lines.err(
                        n,
                        ParseErrorKind::BadScale(format!("{} factors for {} modes", s.len(), dims.len())),
                    ));
                }
                scale = Some(s);
                continue;
            }
        }
        for tok in l.split_whitespace() {
            if values.len() == expected {
                return Err(lines.err(
                    n,
                    ParseErrorKind::CountMismatch {
                        expected,
                        found: expected + 1 + lines_remaining_tokens(l, tok),
                    },
                ));
            }
            values.push(parse_value(tok).map_err(|k| lines.err(n, k))?);
        }
    }
    if values.len() != expected {
        return Err(lines.err(
            last_line,
            ParseErrorKind::CountMismatch {
                expected,
                found: values.len(),
            },
        ));
    }
    Ok(TensorFile {
        tensor: DenseTensor::new(dims, values)?,
        scale,
    })
}

/// Tokens on `line` after `tok` (a lower bound on the surplus).
fn lines_remaining_tokens(line: &str, tok: &str) -> usize {
    let start = tok.as_ptr() as usize - line.as_ptr() as usize + tok.len();
    line[start..].split_whitespace().count()
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    parse_tensor(path, &read_text(path)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    Ok(read_tensor_file(path)?.tensor)
}

/// Renders a tensor file, one mode-1 fiber per line.
pub fn render_tensor(t: &DenseTensor, scale: Option<&[f64]>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{TENSOR_HEADER}").unwrap();
    writeln!(out, "dims: {}", join(t.dims().iter().map(usize::to_string))).unwrap();
    if let Some(s) = scale {
        if s.len() != t.order() || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid(format!("scale {s:?} does not fit a tensor of order {}", t.order())));
        }
        writeln!(out, "scale: {}", join(s.iter().map(|&v| format_value(v)))).unwrap();
    }
    for fiber in t.values().chunks(t.dims()[0]) {
        writeln!(out, "{}", join(fiber.iter().map(|&v| format_value(v)))).unwrap();
    }
    Ok(out)
}

pub fn write_tensor(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    write_tensor_with_scale(t, None, path)
}

pub fn write_tensor_with_scale(t: &DenseTensor, scale: Option<&[f64]>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, render_tensor(t, scale)?)?)
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(" ")
}

pub fn parse_samples(path: &Path, text: &str) -> Result<SampleSet> {
    let mut lines = Lines::new(path, text);
    lines.header(SAMPLES_HEADER)?;
    let dims = lines.dims()?;
    let order = dims.len();
    let mut first_seen: HashMap<usize, usize> = HashMap::new();
    let mut offsets = Vec::new();
    let mut values = Vec::new();
    while let Some((n, l)) = lines.next_line() {
        if l.is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != order + 1 {
            return Err(lines.err(
                n,
                ParseErrorKind::FieldCount {
                    expected: order + 1,
                    found: fields.len(),
                },
            ));
        }
        let mut index = Vec::with_capacity(order);
        for (mode, (tok, &extent)) in fields.iter().zip(&dims).enumerate() {
            let i: i64 = tok.parse().map_err(|_| lines.err(n, ParseErrorKind::BadNumber((*tok).into())))?;
            if i < 1 || i as u64 > extent as u64 {
                return Err(lines.err(
                    n,
                    ParseErrorKind::IndexOutOfRange {
                        mode: mode + 1,
                        index: i,
                        extent,
                    },
                ));
            }
            index.push(i as usize - 1);
        }
        let value = parse_value(fields[order]).map_err(|k| lines.err(n, k))?;
        let offset = offset_of(&dims, &index)?;
        if let Some(&first_line) = first_seen.get(&offset) {
            return Err(lines.err(n, ParseErrorKind::Duplicate { first_line }));
        }
        first_seen.insert(offset, n);
        offsets.push(offset);
        values.push(value);
    }
    SampleSet::from_offsets(&dims, offsets, values)
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    parse_samples(path, &read_text(path)?)
}

pub fn render_samples(s: &SampleSet) -> String {
    let mut out = String::new();
    writeln!(out, "{SAMPLES_HEADER}").unwrap();
    writeln!(out, "dims: {}", join(s.dims().iter().map(usize::to_string))).unwrap();
    for (index, value) in s.iter() {
        writeln!(
            out,
            "{} {}",
            join(index.iter().map(|i| (i + 1).to_string())),
            format_value(value)
        )
        .unwrap();
    }
    out
}

pub fn write_samples(s: &SampleSet, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, render_samples(s))?)
}

/// Parses a tuning grid: one candidate per line, `alpha a1 ... aN`,
/// `epsilon e` or `none`. Blank lines and `#` comments are skipped.
pub fn parse_grid_spec(path: &Path, text: &str) -> Result<Vec<Candidate>> {
    let err = |line, kind| Error::Parse {
        path: path.to_path_buf(),
        line,
        kind,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let mut toks = l.split_whitespace();
        let key = toks.next().unwrap_or("");
        let nums = toks
            .map(|t| parse_value(t).map_err(|k| err(n, k)))
            .collect::<Result<Vec<f64>>>()?;
        let c = match (key, nums.len()) {
            ("none", 0) => Candidate::Fixed,
            ("epsilon", 1) => Candidate::Epsilon(nums[0]),
            ("alpha", k) if k > 0 => Candidate::Alphas(nums),
            ("epsilon", k) => return Err(err(n, ParseErrorKind::FieldCount { expected: 2, found: k + 1 })),
            _ => return Err(err(n, ParseErrorKind::BadNumber(l.into()))),
        };
        out.push(c);
    }
    Ok(out)
}

pub fn read_grid_spec(path: impl AsRef<Path>) -> Result<Vec<Candidate>> {
    let path = path.as_ref();
    parse_grid_spec(path, &read_text(path)?)
}

/// Names of the coordinate columns (one per mode, in mode order) and the
/// value column of a gridded CSV table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnMap {
    pub axes: Vec<String>,
    pub value: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            axes: vec!["x".into(), "y".into(), "height".into()],
            value: "value".into(),
        }
    }
}

/// A tensor ingested from a grid table with the coordinates of each index.
#[derive(Clone, Debug, PartialEq)]
pub struct GridData {
    pub tensor: DenseTensor,
    pub geometry: Geometry,
}

impl GridData {
    /// Keeps the index ranges `start..end` per mode.
    pub fn crop(&self, ranges: &[std::ops::Range<usize>]) -> Result<GridData> {
        let dims = self.tensor.dims();
        if ranges.len() != dims.len() || ranges.iter().zip(dims).any(|(r, &n)| r.start >= r.end || r.end > n) {
            return Err(invalid(format!("crop ranges {ranges:?} do not fit dims {dims:?}")));
        }
        let new_dims: Vec<usize> = ranges.iter().map(|r| r.end - r.start).collect();
        let tensor = DenseTensor::from_fn(&new_dims, |idx| {
            let src: Vec<usize> = idx.iter().zip(ranges).map(|(i, r)| i + r.start).collect();
            self.tensor.get(&src).expect("in range")
        })?;
        let axes = self
            .geometry
            .axes()
            .iter()
            .zip(ranges)
            .map(|(a, r)| a[r.clone()].to_vec())
            .collect();
        Ok(GridData {
            tensor,
            geometry: Geometry::from_axes(axes)?,
        })
    }
}

/// Reads a CSV table with one row per grid cell. Each axis is the sorted set
/// of distinct coordinates found in its column; every combination must occur
/// exactly once.
pub fn ingest_grid_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<GridData> {
    let path = path.as_ref();
    if columns.axes.is_empty() || columns.axes.len() > MAX_ORDER {
        return Err(invalid(format!("expected 1 to {MAX_ORDER} axis columns")));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            kind: ParseErrorKind::MissingColumn(name.into()),
        })
    };
    let axis_cols = columns.axes.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let value_col = find(&columns.value)?;

    let mut rows: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| {
            let tok = record.get(c).unwrap_or("");
            parse_value(tok).map_err(|kind| Error::Parse {
                path: path.to_path_buf(),
                line,
                kind,
            })
        };
        let coords = axis_cols.iter().map(|&c| field(c)).collect::<Result<Vec<_>>>()?;
        rows.push((line, coords, field(value_col)?));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            kind: ParseErrorKind::UnexpectedEof,
        });
    }

    let axes: Vec<Vec<f64>> = (0..axis_cols.len())
        .map(|m| {
            let mut a: Vec<f64> = rows.iter().map(|r| r.1[m]).collect();
            a.sort_by(f64::total_cmp);
            a.dedup();
            a
        })
        .collect();
    let dims: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| invalid(format!("grid of {dims:?} cells overflows")))?;

    let mut cells: HashMap<usize, (usize, f64)> = HashMap::with_capacity(rows.len());
    for (line, coords, value) in &rows {
        let index: Vec<usize> = coords
            .iter()
            .zip(&axes)
            .map(|(c, a)| a.binary_search_by(|p| p.total_cmp(c)).expect("coordinate is on its axis"))
            .collect();
        let o = offset_of(&dims, &index)?;
        if let Some(&(first_line, _)) = cells.get(&o) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                kind: ParseErrorKind::Duplicate { first_line },
            });
        }
        cells.insert(o, (*line, *value));
    }
    if cells.len() < total {
        let shown = (0..total)
            .filter(|o| !cells.contains_key(o))
            .take(10)
            .map(|o| {
                let idx = multi_index_of(&dims, o);
                let parts: Vec<String> = idx
                    .iter()
                    .zip(&columns.axes)
                    .zip(&axes)
                    .map(|((&i, name), a)| format!("{name}={}", format_value(a[i])))
                    .collect();
                format!("({})", parts.join(", "))
            })
            .collect::<Vec<_>>()
            .join(" ");
        return Err(Error::IncompleteGrid {
            total_missing: total - cells.len(),
            shown,
        });
    }
    let values = (0..total).map(|o| cells[&o].1).collect();
    Ok(GridData {
        tensor: DenseTensor::new(dims, values)?,
        geometry: Geometry::from_axes(axes)?,
    })
}

/// Writes one CSV row per cell in storage order, the inverse of
/// [`ingest_grid_csv`].
pub fn export_grid_csv(data: &GridData, columns: &ColumnMap, path: impl AsRef<Path>) -> Result<()> {
    let t = &data.tensor;
    if columns.axes.len() != t.order() || data.geometry.dims() != t.dims() {
        return Err(invalid("column map and geometry must match the tensor order and dims"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = columns.axes.iter().map(String::as_str).collect();
    header.push(&columns.value);
    w.write_record(&header)?;
    for (o, &v) in t.values().iter().enumerate() {
        let mut row: Vec<String> = data
            .geometry
            .coordinate(&multi_index_of(t.dims(), o))
            .into_iter()
            .map(format_value)
            .collect();
        row.push(format_value(v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Placeholder path used when parsing in-memory text.
pub fn memory_path() -> PathBuf {
    PathBuf::from("<memory>")
}
