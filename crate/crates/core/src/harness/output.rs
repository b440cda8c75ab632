//! CSV emission and parsing. Header row, comma separated, UTF-8, LF line
//! endings; columns in struct field order.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{MethodSummary, ResultRow};
use crate::error::{Error, Result};

fn write_csv<T: Serialize, W: Write>(items: &[T], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_csv<T: DeserializeOwned, R: Read>(input: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if found != header {
        let at = header
            .iter()
            .zip(found.iter().map(String::as_str).chain(std::iter::repeat("")))
            .find(|(a, b)| **a != *b)
            .map_or("", |(a, _)| a);
        return Err(Error::Parse(format!("header mismatch at column `{at}`")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const ROW_COLUMNS: &[&str] = &[
    "method",
    "direction",
    "bridge",
    "n",
    "K",
    "M",
    "replication",
    "r_hat",
    "log_r_hat",
    "se_log",
    "zero_count",
    "squared_error_of_log",
    "calibration_flag",
    "cost",
    "seed",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "method",
    "direction",
    "bridge",
    "n",
    "K",
    "M",
    "replications",
    "mse",
    "mse_se",
    "zero_fraction",
    "calibration_fraction",
    "mean_cost",
];

pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    if rows.is_empty() {
        let mut out = out;
        writeln!(out, "{}", ROW_COLUMNS.join(","))?;
        return Ok(());
    }
    write_csv(rows, out)
}

pub fn parse_rows<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    parse_csv(input, ROW_COLUMNS)
}

pub fn write_summaries<W: Write>(rows: &[MethodSummary], out: W) -> Result<()> {
    if rows.is_empty() {
        let mut out = out;
        writeln!(out, "{}", SUMMARY_COLUMNS.join(","))?;
        return Ok(());
    }
    write_csv(rows, out)
}

pub fn parse_summaries<R: Read>(input: R) -> Result<Vec<MethodSummary>> {
    parse_csv(input, SUMMARY_COLUMNS)
}
