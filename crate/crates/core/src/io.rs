//! Reading and writing interaction matrices, side features and test sets.
//!
//! * MatrixMarket `coordinate integer general` (1-based indices).
//! * Triplet text: `row col value` per line, separated by whitespace or
//!   commas, 1-based. A `# shape I J` comment declares the grid.
//! * Dense CSV: one matrix row per line, `,` delimiter, `.` decimal point,
//!   optional single header row (side features only).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, SideFeatures, TestRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionFormat {
    MatrixMarket,
    CsvTriplet,
    DenseCsv,
}

impl InteractionFormat {
    /// Guess from the file extension: `.mtx` → MatrixMarket, `.txt`/`.tsv`/`.triplet`
    /// → triplet, anything else → dense CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") => Self::MatrixMarket,
            Some("txt") | Some("tsv") | Some("triplet") => Self::CsvTriplet,
            _ => Self::DenseCsv,
        }
    }
}

impl FromStr for InteractionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix-market" | "mtx" => Ok(Self::MatrixMarket),
            "csv-triplet" | "triplet" => Ok(Self::CsvTriplet),
            "dense-csv" | "dense" => Ok(Self::DenseCsv),
            other => Err(Error::Validation(format!("unknown interaction format '{other}'"))),
        }
    }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Loads a binary interaction matrix. `shape` declares the grid for triplet
/// files without a `# shape` line; otherwise the grid is the bounding box of
/// the listed cells.
pub fn load_interactions(
    path: &Path,
    format: InteractionFormat,
    shape: Option<(usize, usize)>,
) -> Result<InteractionMatrix> {
    let text = fs::read_to_string(path)?;
    match format {
        InteractionFormat::MatrixMarket => parse_matrix_market(path, &text),
        InteractionFormat::CsvTriplet => parse_triplets(path, &text, shape),
        InteractionFormat::DenseCsv => parse_dense_labels(path, &text),
    }
}

fn parse_label(path: &Path, line: usize, tok: &str) -> Result<u8> {
    let v: f64 = tok
        .parse()
        .map_err(|_| format_err(path, line, format!("'{tok}' is not a number")))?;
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Validation(format!(
            "{}:{line}: label {tok} is not binary",
            path.display()
        )))
    }
}

fn parse_index(path: &Path, line: usize, tok: &str, bound: Option<usize>) -> Result<usize> {
    let v: usize = tok
        .parse()
        .map_err(|_| format_err(path, line, format!("'{tok}' is not a positive integer index")))?;
    if v == 0 {
        return Err(format_err(path, line, "indices are 1-based"));
    }
    if let Some(b) = bound {
        if v > b {
            return Err(format_err(path, line, format!("index {v} exceeds dimension {b}")));
        }
    }
    Ok(v - 1)
}

fn tokens(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

fn parse_matrix_market(path: &Path, text: &str) -> Result<InteractionMatrix> {
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    let (_, banner) = lines
        .next()
        .ok_or_else(|| format_err(path, 1, "empty file"))?;
    let banner_lc = banner.to_ascii_lowercase();
    let fields: Vec<&str> = banner_lc.split_whitespace().collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(format_err(path, 1, "missing %%MatrixMarket matrix banner"));
    }
    if fields[2] != "coordinate" {
        return Err(format_err(path, 1, "only coordinate storage is supported"));
    }
    let pattern = match fields[3] {
        "integer" | "real" => false,
        "pattern" => true,
        other => return Err(format_err(path, 1, format!("unsupported field type '{other}'"))),
    };
    if fields[4] != "general" {
        return Err(format_err(path, 1, "only general symmetry is supported"));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut labels: Option<Array2<u8>> = None;
    let mut seen = 0usize;
    for (n, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(format_err(path, n, "size line must be 'rows cols entries'"));
                }
                let p = |t: &str| {
                    t.parse::<usize>()
                        .map_err(|_| format_err(path, n, format!("'{t}' is not a count")))
                };
                let s = (p(toks[0])?, p(toks[1])?, p(toks[2])?);
                labels = Some(Array2::zeros((s.0, s.1)));
                size = Some(s);
            }
            Some((rows, cols, _)) => {
                let want = if pattern { 2 } else { 3 };
                if toks.len() != want {
                    return Err(format_err(path, n, format!("expected {want} fields")));
                }
                let i = parse_index(path, n, toks[0], Some(rows))?;
                let j = parse_index(path, n, toks[1], Some(cols))?;
                let v = if pattern { 1 } else { parse_label(path, n, toks[2])? };
                labels.as_mut().expect("size parsed")[[i, j]] = v;
                seen += 1;
            }
        }
    }
    let (_, _, nnz) = size.ok_or_else(|| format_err(path, 1, "missing size line"))?;
    if seen != nnz {
        return Err(format_err(
            path,
            1,
            format!("size line declares {nnz} entries but {seen} were read"),
        ));
    }
    InteractionMatrix::from_dense(labels.expect("size parsed"))
}

fn parse_triplets(
    path: &Path,
    text: &str,
    shape: Option<(usize, usize)>,
) -> Result<InteractionMatrix> {
    let mut declared = shape;
    let mut cells = Vec::new();
    for (n, raw) in text.lines().enumerate().map(|(n, l)| (n + 1, l)) {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#').or_else(|| line.strip_prefix('%')) {
            let toks = tokens(rest);
            if toks.len() == 3 && toks[0] == "shape" && declared.is_none() {
                let p = |t: &str| {
                    t.parse::<usize>()
                        .map_err(|_| format_err(path, n, format!("'{t}' is not a count")))
                };
                declared = Some((p(toks[1])?, p(toks[2])?));
            }
            continue;
        }
        let toks = tokens(line);
        if toks.len() != 3 {
            return Err(format_err(path, n, "expected 'row col value'"));
        }
        let i = parse_index(path, n, toks[0], declared.map(|s| s.0))?;
        let j = parse_index(path, n, toks[1], declared.map(|s| s.1))?;
        let v = parse_label(path, n, toks[2])?;
        cells.push((i, j, v));
    }
    let (rows, cols) = declared.unwrap_or_else(|| {
        cells.iter().fold((0, 0), |(r, c), &(i, j, _)| (r.max(i + 1), c.max(j + 1)))
    });
    let mut labels = Array2::zeros((rows, cols));
    for (i, j, v) in cells {
        labels[[i, j]] = v;
    }
    InteractionMatrix::from_dense(labels)
}

/// Parsed dense CSV: optional header plus rows of string cells with their
/// line numbers.
struct CsvTable {
    header: Option<Vec<String>>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_csv_table(path: &Path, text: &str, allow_header: bool) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        let cells: Vec<String> = rec.iter().map(str::to_owned).collect();
        if cells.len() == 1 && cells[0].is_empty() {
            continue;
        }
        if idx == 0 && allow_header && cells.iter().all(|c| c.parse::<f64>().is_err()) {
            header = Some(cells);
            width = header.as_ref().map(Vec::len);
            continue;
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Dimension(format!(
                    "{}:{line}: row has {} columns, expected {w}",
                    path.display(),
                    cells.len()
                )))
            }
            _ => {}
        }
        rows.push((line, cells));
    }
    Ok(CsvTable { header, rows })
}

fn parse_dense_labels(path: &Path, text: &str) -> Result<InteractionMatrix> {
    let table = read_csv_table(path, text, false)?;
    let cols = table.rows.first().map(|r| r.1.len()).unwrap_or(0);
    let mut labels = Array2::zeros((table.rows.len(), cols));
    for (i, (line, cells)) in table.rows.iter().enumerate() {
        for (j, c) in cells.iter().enumerate() {
            labels[[i, j]] = parse_label(path, *line, c)?;
        }
    }
    InteractionMatrix::from_dense(labels)
}

/// Reads a dense numeric CSV matrix with an optional header row.
pub fn load_matrix_csv<F: Scalar>(path: &Path) -> Result<(Array2<F>, Option<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let table = read_csv_table(path, &text, true)?;
    let cols = table
        .rows
        .first()
        .map(|r| r.1.len())
        .or(table.header.as_ref().map(Vec::len))
        .unwrap_or(0);
    let mut m = Array2::zeros((table.rows.len(), cols));
    for (i, (line, cells)) in table.rows.iter().enumerate() {
        for (j, c) in cells.iter().enumerate() {
            m[[i, j]] = c
                .parse::<F>()
                .map_err(|_| format_err(path, *line, format!("'{c}' is not numeric")))?;
        }
    }
    Ok((m, table.header))
}

/// Loads side features, appending an identity block when `augment` is set.
pub fn load_side_features<F: Scalar>(path: &Path, augment: bool) -> Result<SideFeatures<F>> {
    let (m, names) = load_matrix_csv(path)?;
    let sf = SideFeatures::new(m, names)?;
    Ok(if augment { sf.augment() } else { sf })
}

pub fn matrix_to_csv<F: Scalar>(m: &Array2<F>, header: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix_csv<F: Scalar>(path: &Path, m: &Array2<F>, header: Option<&[String]>) -> Result<()> {
    fs::write(path, matrix_to_csv(m, header))?;
    Ok(())
}

/// Writes side features as dense CSV (with a header when names are known).
/// Augmented matrices are written in full.
pub fn save_side_features<F: Scalar>(path: &Path, sf: &SideFeatures<F>) -> Result<()> {
    save_matrix_csv(path, sf.matrix(), sf.feature_names())
}

pub fn save_interactions(path: &Path, y: &InteractionMatrix, format: InteractionFormat) -> Result<()> {
    let (rows, cols) = y.shape();
    let mut out = String::new();
    match format {
        InteractionFormat::MatrixMarket => {
            out.push_str("%%MatrixMarket matrix coordinate integer general\n");
            writeln!(out, "{rows} {cols} {}", y.n_positives()).unwrap();
            for &(i, j) in y.positives() {
                writeln!(out, "{} {} 1", i + 1, j + 1).unwrap();
            }
        }
        InteractionFormat::CsvTriplet => {
            writeln!(out, "# shape {rows} {cols}").unwrap();
            for &(i, j) in y.positives() {
                writeln!(out, "{} {} 1", i + 1, j + 1).unwrap();
            }
        }
        InteractionFormat::DenseCsv => {
            for row in y.labels().rows() {
                let cells: Vec<String> = row.iter().map(u8::to_string).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes `row,col,label` (1-based) with a header line.
pub fn save_test_set(path: &Path, records: &[TestRecord]) -> Result<()> {
    let mut out = String::with_capacity(records.len() * 12 + 16);
    out.push_str("row,col,label\n");
    for r in records {
        writeln!(out, "{},{},{}", r.row + 1, r.col + 1, r.label).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_test_set(path: &Path) -> Result<Vec<TestRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate().map(|(n, l)| (n + 1, l)) {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (n == 1 && line.starts_with("row")) {
            continue;
        }
        let toks = tokens(line);
        if toks.len() != 3 {
            return Err(format_err(path, n, "expected 'row,col,label'"));
        }
        out.push(TestRecord {
            row: parse_index(path, n, toks[0], None)?,
            col: parse_index(path, n, toks[1], None)?,
            label: parse_label(path, n, toks[2])?,
        });
    }
    Ok(out)
}
