//! CSV and text formats for regressors, contrasts, designs and run orders.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::design::{Design, DesignSpace};
use crate::error::{Error, Result};
use crate::nuisance::ModelKind;

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: '{field}' is not a number")))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// Header, then one row per condition: label followed by regressor values.
pub fn read_nuisance_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = reader(std::fs::File::open(path)?);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut d = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() < 2 {
            return Err(Error::Parse(format!(
                "line {line}: need a label and at least one value"
            )));
        }
        if *d.get_or_insert(rec.len() - 1) != rec.len() - 1 {
            return Err(Error::Parse(format!("line {line}: ragged row")));
        }
        labels.push(rec[0].to_string());
        for f in rec.iter().skip(1) {
            values.push(parse_f64(f, line)?);
        }
    }
    let d = d.ok_or_else(|| Error::Parse("empty nuisance table".into()))?;
    Ok((
        labels.clone(),
        DMatrix::from_row_slice(labels.len(), d, &values),
    ))
}

/// Header of contrast names, then one row per treatment.
pub fn read_contrast_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = reader(std::fs::File::open(path)?);
    let s = rdr.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != s {
            return Err(Error::Parse(format!("line {}: expected {s} values", i + 2)));
        }
        for f in rec.iter() {
            values.push(parse_f64(f, i + 2)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, s, &values))
}

/// `v × n` table with a header of condition labels, six decimals.
pub fn write_dense_csv<W: Write>(w: W, xi: &Design) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let space = xi.space();
    let mut header = vec!["u".to_string()];
    header.extend(space.conditions().iter().cloned());
    wtr.write_record(&header)?;
    let m = xi.to_dense();
    for u in 0..space.v() {
        let mut row = vec![(u + 1).to_string()];
        row.extend((0..space.n()).map(|t| format!("{:.6}", m[(u, t)])));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// `u,t,weight` triples (1-based indices) at full precision.
pub fn write_sparse_csv<W: Write>(w: W, xi: &Design) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["u", "t", "weight"])?;
    for (u, t, x) in xi.cells() {
        wtr.write_record([(u + 1).to_string(), (t + 1).to_string(), x.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads either CSV layout; the total weight may deviate from one by `sum_tol`
/// and is rescaled.
pub fn read_design_csv<R: Read>(r: R, space: Arc<DesignSpace>, sum_tol: f64) -> Result<Design> {
    let mut rdr = reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut cells = Vec::new();
    let index = |f: &str, line: usize, max: usize, what: &str| -> Result<usize> {
        let i: usize = f
            .parse()
            .map_err(|_| Error::Parse(format!("line {line}: bad {what} index '{f}'")))?;
        if i == 0 || i > max {
            return Err(Error::Parse(format!(
                "line {line}: {what} index {i} out of range"
            )));
        }
        Ok(i - 1)
    };
    if header == ["u", "t", "weight"] {
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("line {line}: expected u,t,weight")));
            }
            let u = index(&rec[0], line, space.v(), "treatment")?;
            let t = index(&rec[1], line, space.n(), "condition")?;
            cells.push((u, t, parse_f64(&rec[2], line)?));
        }
    } else {
        if header.len() != space.n() + 1 {
            return Err(Error::Parse(format!(
                "header has {} condition columns, model has {}",
                header.len().saturating_sub(1),
                space.n()
            )));
        }
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != header.len() {
                return Err(Error::Parse(format!("line {line}: ragged row")));
            }
            let u = index(&rec[0], line, space.v(), "treatment")?;
            for (t, f) in rec.iter().skip(1).enumerate() {
                cells.push((u, t, parse_f64(f, line)?));
            }
        }
    }
    Design::normalized(space, cells, sum_tol)
}

/// Conditions per printed line and the line prefix for grouped layouts.
fn grouping(kind: &ModelKind) -> Option<(char, usize)> {
    match *kind {
        ModelKind::BlockTrend { blocksize, .. } => Some(('b', blocksize)),
        ModelKind::RowColumn { cols, .. } => Some(('r', cols)),
        _ => None,
    }
}

fn join(order: &[usize], v: usize) -> String {
    let items: Vec<String> = order.iter().map(|u| (u + 1).to_string()).collect();
    if v <= 9 {
        items.concat()
    } else {
        items.join(" ")
    }
}

/// 1-based treatments, digits run together when `v ≤ 9`; grouped layouts
/// print one `b1=…` (or `r1=…`) line per block or row.
pub fn format_run_order(order: &[usize], v: usize, kind: &ModelKind) -> String {
    match grouping(kind) {
        Some((prefix, size)) => order
            .chunks(size)
            .enumerate()
            .map(|(i, c)| format!("{prefix}{}={}\n", i + 1, join(c, v)))
            .collect(),
        None => format!("{}\n", join(order, v)),
    }
}

/// Inverse of [`format_run_order`]; returns 0-based treatments.
pub fn parse_run_order(text: &str, v: usize, n: usize) -> Result<Vec<usize>> {
    let mut order = Vec::with_capacity(n);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let body = match line.split_once('=') {
            Some((_, rest)) => rest.trim(),
            None => line,
        };
        let tokens: Vec<&str> = if body.contains(|c: char| c.is_whitespace() || c == ',') {
            body.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect()
        } else {
            body.split("").filter(|s| !s.is_empty()).collect()
        };
        for tok in tokens {
            let u: usize = tok
                .parse()
                .map_err(|_| Error::Parse(format!("'{tok}' is not a treatment number")))?;
            if u == 0 || u > v {
                return Err(Error::Parse(format!("treatment {u} outside 1..={v}")));
            }
            order.push(u - 1);
        }
    }
    if order.len() != n {
        return Err(Error::Parse(format!(
            "run order has {} entries for {n} conditions",
            order.len()
        )));
    }
    Ok(order)
}

/// A design file: `.csv` in either layout, anything else a run order.
pub fn read_design_file(path: &Path, space: Arc<DesignSpace>, sum_tol: f64) -> Result<Design> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_design_csv(std::fs::File::open(path)?, space, sum_tol)
    } else {
        let text = std::fs::read_to_string(path)?;
        let order = parse_run_order(&text, space.v(), space.n())?;
        Design::from_run_order(space, &order)
    }
}
