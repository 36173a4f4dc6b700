//! Design files.
//!
//! Two formats are accepted. The line format:
//!
//! ```text
//! # comment lines start with '#'
//! m=20 n=4 N=4 K=6 r=30 T=5 mu=1/2
//! 1 1,2 2 0 0 0 0
//! 2 1,3 2 0 0 0 0
//! ...
//! ```
//!
//! The header carries the parameters, then one line per batch: the 1-based
//! batch index, its comma-separated server label and the `T` entries of its
//! assignment row. Labels must match the lexicographic labelling.
//!
//! The structured format is a JSON object with the same fields:
//! `{"m":20,"n":4,"N":4,"K":6,"r":30,"T":5,"mu":"1/2","batches":[{"index":1,"label":[1,2],"row":[2,0,0,0,0]},...]}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Fraction, ParameterError, RawParameters, SystemParameters};
use crate::storage::{enumerate_batch_labels, AssignmentMatrix, DesignError, StorageDesign};

#[derive(Debug, Error)]
pub enum DesignFileError {
    #[error("line {line}: field `{field}`: {message}")]
    Parse { line: usize, field: String, message: String },
    #[error("invalid parameters: {0}")]
    Params(#[from] ParameterError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("structured design: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignFormat {
    Lines,
    Json,
}

/// Parses `"p/q"` (or a bare integer) into an exact fraction.
pub fn parse_fraction(text: &str) -> Result<Fraction, String> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: u64 = num.parse().map_err(|_| format!("bad numerator in `{text}`"))?;
    let den: u64 = den.parse().map_err(|_| format!("bad denominator in `{text}`"))?;
    if den == 0 {
        return Err(format!("zero denominator in `{text}`"));
    }
    Ok(Fraction::new(num, den))
}

pub fn format_fraction(f: Fraction) -> String {
    format!("{}/{}", f.numer(), f.denom())
}

fn header_line(p: &SystemParameters) -> String {
    format!(
        "m={} n={} N={} K={} r={} T={} mu={}",
        p.source_rows(),
        p.columns(),
        p.vectors(),
        p.servers(),
        p.coded_rows(),
        p.partitions(),
        format_fraction(p.mu())
    )
}

pub fn to_text(design: &StorageDesign) -> String {
    let mut out = String::new();
    out.push_str("# block-diagonal storage design\n");
    out.push_str("# header: m n N K r T mu; rows: batch label entries...\n");
    out.push_str(&header_line(design.params()));
    out.push('\n');
    for (b, (label, row)) in design.labels().iter().zip(design.assignment().rows()).enumerate() {
        write!(out, "{} {}", b + 1, label).unwrap();
        for v in row {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> DesignFileError {
    DesignFileError::Parse { line, field: field.to_string(), message: message.into() }
}

fn parse_header(line_no: usize, line: &str) -> Result<RawParameters, DesignFileError> {
    let mut fields: [Option<u64>; 6] = [None; 6];
    let names = ["m", "n", "N", "K", "r", "T"];
    let mut mu = None;
    for token in line.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, token, "expected key=value"))?;
        if key == "mu" {
            mu = Some(parse_fraction(value).map_err(|e| parse_err(line_no, "mu", e))?);
            continue;
        }
        let slot = names
            .iter()
            .position(|n| *n == key)
            .ok_or_else(|| parse_err(line_no, key, "unknown header field"))?;
        fields[slot] = Some(value.parse().map_err(|_| parse_err(line_no, key, format!("not an integer: `{value}`")))?);
    }
    let get = |i: usize| fields[i].ok_or_else(|| parse_err(line_no, names[i], "missing from header"));
    Ok(RawParameters {
        source_rows: get(0)?,
        columns: get(1)?,
        vectors: get(2)?,
        servers: get(3)?,
        coded_rows: get(4)?,
        partitions: get(5)?,
        mu: mu.ok_or_else(|| parse_err(line_no, "mu", "missing from header"))?,
    })
}

pub fn from_text(text: &str) -> Result<StorageDesign, DesignFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (header_no, header) = lines.next().ok_or_else(|| parse_err(0, "header", "empty design file"))?;
    let params = parse_header(header_no, header)?.validate()?;
    let labels = enumerate_batch_labels(params.servers(), params.mu_q());
    let partitions = params.partitions() as usize;
    let mut rows = Vec::with_capacity(labels.len());
    for (line_no, line) in lines {
        let mut tokens = line.split_whitespace();
        let index: usize = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(line_no, "batch", "expected a batch index"))?;
        if index != rows.len() + 1 {
            return Err(parse_err(line_no, "batch", format!("expected batch {}, found {index}", rows.len() + 1)));
        }
        let label_text = tokens.next().ok_or_else(|| parse_err(line_no, "label", "missing"))?;
        let label: Vec<u32> = label_text
            .split(',')
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(line_no, "label", format!("bad server list `{label_text}`")))?;
        match labels.get(index - 1) {
            Some(expected) if expected.servers() == label.as_slice() => {}
            Some(expected) => {
                return Err(parse_err(line_no, "label", format!("batch {index} must be labelled {expected}")))
            }
            None => return Err(parse_err(line_no, "batch", format!("more than {} batches", labels.len()))),
        }
        let row: Vec<u32> = tokens
            .enumerate()
            .map(|(t, v)| v.parse().map_err(|_| parse_err(line_no, &format!("p[{index},{}]", t + 1), format!("not a count: `{v}`"))))
            .collect::<Result<_, _>>()?;
        if row.len() != partitions {
            return Err(parse_err(line_no, "row", format!("expected {partitions} entries, found {}", row.len())));
        }
        rows.push(row);
    }
    if rows.len() != labels.len() {
        return Err(parse_err(0, "batch", format!("expected {} batches, found {}", labels.len(), rows.len())));
    }
    Ok(StorageDesign::new(params, AssignmentMatrix::from_rows(rows)?)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonBatch {
    index: usize,
    label: Vec<u32>,
    row: Vec<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonDesign {
    m: u64,
    n: u64,
    #[serde(rename = "N")]
    vectors: u64,
    #[serde(rename = "K")]
    servers: u64,
    r: u64,
    #[serde(rename = "T")]
    partitions: u64,
    mu: String,
    batches: Vec<JsonBatch>,
}

pub fn to_json(design: &StorageDesign) -> String {
    let p = design.params();
    let doc = JsonDesign {
        m: p.source_rows(),
        n: p.columns(),
        vectors: p.vectors(),
        servers: p.servers(),
        r: p.coded_rows(),
        partitions: p.partitions(),
        mu: format_fraction(p.mu()),
        batches: design
            .labels()
            .iter()
            .zip(design.assignment().rows())
            .enumerate()
            .map(|(b, (label, row))| JsonBatch { index: b + 1, label: label.servers().to_vec(), row: row.to_vec() })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("design serializes");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<StorageDesign, DesignFileError> {
    let doc: JsonDesign = serde_json::from_str(text)?;
    let mu = parse_fraction(&doc.mu).map_err(|e| parse_err(0, "mu", e))?;
    let params = RawParameters {
        source_rows: doc.m,
        columns: doc.n,
        vectors: doc.vectors,
        servers: doc.servers,
        mu,
        coded_rows: doc.r,
        partitions: doc.partitions,
    }
    .validate()?;
    let labels = enumerate_batch_labels(params.servers(), params.mu_q());
    if doc.batches.len() != labels.len() {
        return Err(parse_err(0, "batches", format!("expected {} batches, found {}", labels.len(), doc.batches.len())));
    }
    let mut rows = Vec::with_capacity(labels.len());
    for (i, batch) in doc.batches.into_iter().enumerate() {
        if batch.index != i + 1 || batch.label.as_slice() != labels[i].servers() {
            return Err(parse_err(0, "batches", format!("entry {} must be batch {} labelled {}", i + 1, i + 1, labels[i])));
        }
        rows.push(batch.row);
    }
    Ok(StorageDesign::new(params, AssignmentMatrix::from_rows(rows)?)?)
}

/// Parses either format, chosen by the first non-blank character.
pub fn load_design(text: &str) -> Result<StorageDesign, DesignFileError> {
    if text.trim_start().starts_with('{') {
        from_json(text)
    } else {
        from_text(text)
    }
}

pub fn save_design(design: &StorageDesign, format: DesignFormat) -> String {
    match format {
        DesignFormat::Lines => to_text(design),
        DesignFormat::Json => to_json(design),
    }
}

pub fn read_design(path: &Path) -> Result<StorageDesign, DesignFileError> {
    let text = fs::read_to_string(path)
        .map_err(|source| DesignFileError::Io { path: path.display().to_string(), source })?;
    load_design(&text)
}

/// Writes the design, choosing JSON for a `.json` extension.
pub fn write_design(path: &Path, design: &StorageDesign) -> Result<(), DesignFileError> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => DesignFormat::Json,
        _ => DesignFormat::Lines,
    };
    fs::write(path, save_design(design, format))
        .map_err(|source| DesignFileError::Io { path: path.display().to_string(), source })
}
