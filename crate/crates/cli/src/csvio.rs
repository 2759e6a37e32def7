//! CSV readers and writers. Labels and components are 1-based on disk.

use std::path::Path;

use lassomix::{Dataset, Truth};
use nalgebra::DMatrix;

use crate::CliError;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

/// Writes a header and rows of already formatted cells.
pub fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        let row: Vec<String> = row.into_iter().collect();
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|j| format!("{prefix}{j}")).collect()
}

/// Header row and records of a CSV held in memory.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn parse_table(bytes: &[u8], name: &str) -> Result<Table, CliError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = r
        .headers()
        .map_err(|e| CliError::Data(format!("{name}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

pub fn parse_f64(cell: &str, name: &str, row: usize) -> Result<f64, CliError> {
    let v: f64 = cell
        .parse()
        .map_err(|_| CliError::Data(format!("{name} row {row}: {cell:?} is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Data(format!("{name} row {row}: non-finite value {cell}")));
    }
    Ok(v)
}

fn parse_label(cell: &str, k: usize, name: &str, row: usize) -> Result<usize, CliError> {
    match cell.parse::<usize>() {
        Ok(l) if (1..=k).contains(&l) => Ok(l - 1),
        _ => Err(CliError::Data(format!("{name} row {row}: label {cell:?} is not in 1..={k}"))),
    }
}

fn parse_flag(cell: &str, name: &str, row: usize) -> Result<bool, CliError> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(CliError::Data(format!("{name} row {row}: expected 0 or 1, got {cell:?}"))),
    }
}

/// `y,x1,...,xp`; the first covariate column is expected to be the intercept.
pub fn parse_dataset(bytes: &[u8]) -> Result<Dataset, CliError> {
    let name = "data.csv";
    let t = parse_table(bytes, name)?;
    if t.header.len() < 2 || t.header[0] != "y" {
        return Err(CliError::Data(format!("{name}: header must be `y,x1,...`")));
    }
    let p = t.header.len() - 1;
    let n = t.rows.len();
    let mut y = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, p);
    for (i, row) in t.rows.iter().enumerate() {
        y.push(parse_f64(&row[0], name, i + 1)?);
        for d in 0..p {
            x[(i, d)] = parse_f64(&row[d + 1], name, i + 1)?;
        }
    }
    Dataset::new(y, x).map_err(|e| CliError::Data(format!("{name}: {e}")))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let mut header = vec!["y".to_string()];
    header.extend(numbered("x", data.p()));
    let x = data.x();
    let rows = (0..data.n()).map(|i| {
        std::iter::once(fmt_f64(data.y()[i])).chain((0..data.p()).map(move |d| fmt_f64(x[(i, d)])))
    });
    write_rows(path, &header, rows)
}

/// One `label` column.
pub fn parse_labels(bytes: &[u8], k: usize, name: &str) -> Result<Vec<usize>, CliError> {
    let t = parse_table(bytes, name)?;
    if t.header.len() != 1 {
        return Err(CliError::Data(format!("{name}: expected a single label column")));
    }
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse_label(&r[0], k, name, i + 1))
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    write_rows(
        path,
        &["label".to_string()],
        labels.iter().map(|&l| [(l + 1).to_string()]),
    )
}

/// `component,x1,...,xp` with 0/1 cells, one row per component.
pub fn parse_gamma(bytes: &[u8], name: &str) -> Result<Vec<Vec<bool>>, CliError> {
    let t = parse_table(bytes, name)?;
    if t.header.len() < 2 || t.header[0] != "component" {
        return Err(CliError::Data(format!("{name}: header must be `component,x1,...`")));
    }
    let k = t.rows.len();
    let mut gamma = vec![Vec::new(); k];
    for (i, row) in t.rows.iter().enumerate() {
        let c = parse_label(&row[0], k, name, i + 1)?;
        gamma[c] = row[1..]
            .iter()
            .map(|cell| parse_flag(cell, name, i + 1))
            .collect::<Result<_, _>>()?;
    }
    if gamma.iter().any(Vec::is_empty) {
        return Err(CliError::Data(format!("{name}: components must be listed once each")));
    }
    Ok(gamma)
}

pub fn write_gamma(path: &Path, gamma: &[Vec<bool>]) -> Result<(), CliError> {
    let p = gamma.first().map_or(0, Vec::len);
    let mut header = vec!["component".to_string()];
    header.extend(numbered("x", p));
    let rows = gamma.iter().enumerate().map(|(c, g)| {
        std::iter::once((c + 1).to_string()).chain(g.iter().map(|&b| u8::from(b).to_string()))
    });
    write_rows(path, &header, rows)
}

/// Optional truth files next to a dataset.
pub fn parse_truth(labels: &[u8], gamma: Option<&[u8]>, k: usize) -> Result<Truth, CliError> {
    let labels = parse_labels(labels, k, "truth_labels.csv")?;
    let gamma = match gamma {
        Some(g) => parse_gamma(g, "truth_gamma.csv")?,
        None => Vec::new(),
    };
    Ok(Truth { labels, gamma })
}
