//! File formats: hierarchy files, forecast and error CSVs.
//!
//! Hierarchy files are UTF-8 text with one of two layouts:
//!
//! ```text
//! [edges]
//! Total,A
//! Total,B
//! ```
//!
//! or a grouped structure
//!
//! ```text
//! [dimensions]
//! Region:North|South
//! Product:X|Y
//! [bottom]
//! North,X
//! South,Y
//! [aggregates]
//!
//! Region
//! ```
//!
//! where an empty `[aggregates]` line is the grand total. In the edge
//! layout a line with a single label declares a standalone node. Lines
//! starting with `#` are comments.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::covariance::ErrorSample;
use crate::error::{Error, Result};
use crate::hierarchy::{Dimension, GroupSpec, Hierarchy};
use crate::reconcile::ForecastPanel;

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Edges,
    Dimensions,
    Bottom,
    Aggregates,
}

pub fn parse_hierarchy(text: &str) -> Result<Hierarchy> {
    let mut section = Section::None;
    let mut nodes: Vec<String> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut dims: Vec<Dimension> = Vec::new();
    let mut bottom: Vec<Vec<String>> = Vec::new();
    let mut aggregates: Vec<Vec<String>> = Vec::new();
    let mut grouped = false;
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        if line.starts_with('[') && line.ends_with(']') {
            section = match &line[1..line.len() - 1] {
                "edges" => Section::Edges,
                "dimensions" => Section::Dimensions,
                "bottom" => Section::Bottom,
                "aggregates" => Section::Aggregates,
                other => return Err(parse_err(format!("unknown section `{other}`"))),
            };
            grouped |= section != Section::Edges;
            if grouped && (!edges.is_empty() || !nodes.is_empty()) {
                return Err(parse_err("cannot mix [edges] with grouped sections".into()));
            }
            continue;
        }
        match section {
            Section::None if line.is_empty() => {}
            Section::None => return Err(parse_err("content before any section header".into())),
            Section::Edges => {
                if line.is_empty() {
                    continue;
                }
                if grouped {
                    return Err(parse_err("cannot mix [edges] with grouped sections".into()));
                }
                let parts: Vec<&str> = line.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [node] => nodes.push(node.to_string()),
                    [p, c] => edges.push((p.to_string(), c.to_string())),
                    _ => return Err(parse_err(format!("expected `parent,child`, got `{line}`"))),
                }
            }
            Section::Dimensions => {
                if line.is_empty() {
                    continue;
                }
                let (name, values) = line
                    .split_once(':')
                    .ok_or_else(|| parse_err(format!("expected `name:v1|v2`, got `{line}`")))?;
                dims.push(Dimension::new(
                    name.trim().to_string(),
                    values.split('|').map(|v| v.trim().to_string()),
                ));
            }
            Section::Bottom => {
                if line.is_empty() {
                    continue;
                }
                bottom.push(line.split(',').map(|v| v.trim().to_string()).collect());
            }
            Section::Aggregates => {
                if line.is_empty() {
                    aggregates.push(Vec::new());
                } else {
                    aggregates.push(line.split('+').map(|v| v.trim().to_string()).collect());
                }
            }
        }
    }
    if grouped {
        // Repeated blank lines request the same total, which is kept once.
        let spec = GroupSpec {
            dimensions: dims,
            bottom_keys: bottom,
            aggregates,
        };
        Hierarchy::from_groups(&spec)
    } else {
        Hierarchy::from_tree(&nodes, &edges)
    }
}

pub fn read_hierarchy(path: &Path) -> Result<Hierarchy> {
    parse_hierarchy(&fs::read_to_string(path)?)
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Forecast CSV: header `series,h1,…,hH`, one row per series.
pub fn parse_forecasts<R: Read>(r: R) -> Result<ForecastPanel> {
    let mut rdr = csv_reader(r);
    let width = rdr.headers()?.len();
    if width < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "forecast header needs `series` and at least one horizon".into(),
        });
    }
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        labels.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            values.push(parse_number(cell, line)?);
        }
    }
    let n = labels.len();
    let base = DMatrix::from_row_slice(n, width - 1, &values);
    ForecastPanel::new(labels, base)
}

pub fn read_forecasts(path: &Path) -> Result<ForecastPanel> {
    parse_forecasts(fs::File::open(path)?)
}

/// Error CSV: header `series,t1,…`, one row per series, empty cells
/// missing. Rows are matched to `h` by label.
pub fn parse_errors<R: Read>(r: R, h: &Hierarchy) -> Result<ErrorSample> {
    let mut rdr = csv_reader(r);
    let mut series: Vec<Option<Vec<Option<f64>>>> = vec![None; h.n()];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let label = &rec[0];
        let idx = h
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
        if series[idx].is_some() {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
        let vals = rec
            .iter()
            .skip(1)
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    parse_number(c, line).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        series[idx] = Some(vals);
    }
    let series = series
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::InsufficientHistory(format!("no errors for series `{}`", h.labels()[i]))))
        .collect::<Result<Vec<_>>>()?;
    ErrorSample::from_series(&series)
}

pub fn read_errors(path: &Path, h: &Hierarchy) -> Result<ErrorSample> {
    parse_errors(fs::File::open(path)?, h)
}

fn parse_number(cell: &str, line: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("line {line}")));
    }
    Ok(v)
}

/// Formats with 12 significant digits, dropping trailing zeros.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{v:.11e}");
        let (mant, e) = s.split_once('e').expect("exponent format");
        let mant = if mant.contains('.') {
            mant.trim_end_matches('0').trim_end_matches('.')
        } else {
            mant
        };
        format!("{mant}e{e}")
    }
}

/// Writes rows `label,v1,…` with a `series,h1,…` header.
pub fn write_forecasts<W: Write>(out: W, labels: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["series".to_string()];
    header.extend((1..=values.ncols()).map(|h| format!("h{h}")));
    w.write_record(&header)?;
    for (i, l) in labels.iter().enumerate() {
        let mut rec = vec![l.clone()];
        rec.extend(values.row(i).iter().map(|&v| format_number(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
