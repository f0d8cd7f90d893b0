//! CSV readers and writers for choice (`exp1`) and panel (`exp2`) data.
//!
//! Headers must match exactly; column order is free. A row with any empty
//! cell is dropped and counted, never imputed.

use std::io::{Read, Write};
use std::path::Path;

use super::{ChoiceRow, PanelRow, StatsError, COVARIATES};

pub const EXP2_COLUMNS: [&str; 9] = [
    "participant_id",
    "product_id",
    "brand_id",
    "set_id",
    "purchase",
    "decision_time_s",
    "k",
    "price",
    "n_images",
];

/// Exact `exp1.csv` header.
pub fn exp1_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["participant_id", "product_id", "y", "k1", "k2"].map(String::from).to_vec();
    for side in ["x1", "x2"] {
        cols.extend(COVARIATES.iter().map(|c| format!("{side}_{c}")));
    }
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub rows: Vec<T>,
    /// Rows skipped because a cell was empty.
    pub dropped: usize,
}

fn io_err(path: &str, e: impl std::fmt::Display) -> StatsError {
    StatsError::Io {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Reads records, mapping each to the cells of `columns` in that order.
fn read_table<R: Read>(reader: R, source: &str, columns: &[String]) -> Result<(Vec<(usize, Vec<String>)>, usize), StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| io_err(source, e))?.clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| StatsError::MissingColumn(c.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut dropped = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io_err(source, e))?;
        let cells: Vec<String> = index.iter().map(|&j| rec.get(j).unwrap_or("").to_string()).collect();
        if cells.iter().any(String::is_empty) {
            dropped += 1;
        } else {
            rows.push((i, cells));
        }
    }
    Ok((rows, dropped))
}

fn parse<T: std::str::FromStr>(row: usize, column: &str, cell: &str) -> Result<T, StatsError> {
    cell.parse().map_err(|_| StatsError::InvalidRow {
        row,
        message: format!("column {column:?}: cannot parse {cell:?}"),
    })
}

pub fn parse_exp1<R: Read>(reader: R, source: &str) -> Result<Loaded<ChoiceRow>, StatsError> {
    let columns = exp1_columns();
    let (raw, dropped) = read_table(reader, source, &columns)?;
    let n_cov = COVARIATES.len();
    let rows = raw
        .into_iter()
        .map(|(i, c)| {
            let num = |j: usize| parse::<f64>(i, &columns[j], &c[j]);
            let row = ChoiceRow {
                participant_id: c[0].clone(),
                product_id: c[1].clone(),
                y: parse(i, "y", &c[2])?,
                k1: num(3)?,
                k2: num(4)?,
                x1: (5..5 + n_cov).map(num).collect::<Result<_, _>>()?,
                x2: (5 + n_cov..5 + 2 * n_cov).map(num).collect::<Result<_, _>>()?,
            };
            row.validate().map_err(|message| StatsError::InvalidRow { row: i, message })?;
            Ok(row)
        })
        .collect::<Result<_, StatsError>>()?;
    Ok(Loaded { rows, dropped })
}

pub fn parse_exp2<R: Read>(reader: R, source: &str) -> Result<Loaded<PanelRow>, StatsError> {
    let columns: Vec<String> = EXP2_COLUMNS.map(String::from).to_vec();
    let (raw, dropped) = read_table(reader, source, &columns)?;
    let rows = raw
        .into_iter()
        .map(|(i, c)| {
            let row = PanelRow {
                participant_id: c[0].clone(),
                product_id: c[1].clone(),
                brand_id: c[2].clone(),
                set_id: c[3].clone(),
                purchase: parse(i, "purchase", &c[4])?,
                decision_time: parse(i, "decision_time_s", &c[5])?,
                k: parse(i, "k", &c[6])?,
                price: parse(i, "price", &c[7])?,
                n_images: parse(i, "n_images", &c[8])?,
            };
            row.validate().map_err(|message| StatsError::InvalidRow { row: i, message })?;
            Ok(row)
        })
        .collect::<Result<_, StatsError>>()?;
    Ok(Loaded { rows, dropped })
}

fn open(path: &Path) -> Result<std::fs::File, StatsError> {
    std::fs::File::open(path).map_err(|e| io_err(&path.display().to_string(), e))
}

pub fn read_exp1(path: &Path) -> Result<Loaded<ChoiceRow>, StatsError> {
    parse_exp1(open(path)?, &path.display().to_string())
}

pub fn read_exp2(path: &Path) -> Result<Loaded<PanelRow>, StatsError> {
    parse_exp2(open(path)?, &path.display().to_string())
}

pub fn write_exp1<W: Write>(writer: W, rows: &[ChoiceRow]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| io_err("<exp1>", e);
    w.write_record(exp1_columns()).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.participant_id.clone(),
            r.product_id.clone(),
            r.y.to_string(),
            r.k1.to_string(),
            r.k2.to_string(),
        ];
        rec.extend(r.x1.iter().chain(&r.x2).map(f64::to_string));
        w.write_record(rec).map_err(err)?;
    }
    w.flush().map_err(|e| io_err("<exp1>", e))
}

pub fn write_exp2<W: Write>(writer: W, rows: &[PanelRow]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| io_err("<exp2>", e);
    w.write_record(EXP2_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record([
            r.participant_id.clone(),
            r.product_id.clone(),
            r.brand_id.clone(),
            r.set_id.clone(),
            r.purchase.to_string(),
            r.decision_time.to_string(),
            r.k.to_string(),
            r.price.to_string(),
            r.n_images.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| io_err("<exp2>", e))
}
