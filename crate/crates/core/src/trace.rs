//! CSV traces: one row per packet, one summary row per run or sweep cell,
//! one row per calibration pair, and one aggregate row per sweep value.
//!
//! Numbers use Rust's shortest round-trip formatting (`.` decimal point,
//! `NaN` for undefined metrics), so re-reading a trace reproduces the
//! records bit for bit.

use std::io::{Read, Write};

use thiserror::Error;

use crate::detector::{ErrorRecord, ReferenceSet, Truth, Verdict};
use crate::harness::SweepAggregate;

pub const PACKET_HEADER: [&str; 6] = ["k", "truth", "e", "pcc", "verdict", "sync_ok"];
pub const SUMMARY_HEADER: [&str; 5] = ["axis_value", "seed", "bob_drop_rate", "eve_drop_rate", "e_th"];
pub const REFERENCE_HEADER: [&str; 3] = ["pair", "e_ab", "e_ae"];
pub const AGGREGATE_HEADER: [&str; 7] = [
    "axis_value",
    "cells",
    "failures",
    "bob_mean",
    "bob_std",
    "eve_mean",
    "eve_std",
];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: bad `{column}` value {value:?}")]
    Field {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row}: expected {expected} fields, got {got}")]
    Width { row: usize, expected: usize, got: usize },
}

/// Summary line; `axis_value` is empty for a plain run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub bob_drop_rate: f64,
    pub eve_drop_rate: f64,
    pub e_th: f64,
}

pub fn write_packet_csv<W: Write>(writer: W, records: &[ErrorRecord]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PACKET_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.truth.to_string(),
            r.e.to_string(),
            r.pcc.to_string(),
            r.verdict.to_string(),
            r.sync_ok.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn field<T>(
    row: usize,
    column: &'static str,
    value: &str,
    parse: impl FnOnce(&str) -> Option<T>,
) -> Result<T, TraceError> {
    parse(value).ok_or_else(|| TraceError::Field {
        row,
        column,
        value: value.to_string(),
    })
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), TraceError> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(TraceError::Header(header.iter().map(String::from).collect()));
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).from_reader(input)
}

pub fn read_packet_csv<R: Read>(input: R) -> Result<Vec<ErrorRecord>, TraceError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &PACKET_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != PACKET_HEADER.len() {
            return Err(TraceError::Width {
                row,
                expected: PACKET_HEADER.len(),
                got: rec.len(),
            });
        }
        out.push(ErrorRecord {
            k: field(row, "k", &rec[0], |s| s.parse().ok())?,
            truth: field(row, "truth", &rec[1], |s| match s {
                "bob" => Some(Truth::Bob),
                "eve" => Some(Truth::Eve),
                _ => None,
            })?,
            e: field(row, "e", &rec[2], |s| s.parse().ok())?,
            pcc: field(row, "pcc", &rec[3], |s| s.parse().ok())?,
            verdict: field(row, "verdict", &rec[4], |s| match s {
                "accept" => Some(Verdict::Accept),
                "drop" => Some(Verdict::Drop),
                _ => None,
            })?,
            sync_ok: field(row, "sync_ok", &rec[5], |s| s.parse().ok())?,
        });
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.axis_value.map(|v| v.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            r.bob_drop_rate.to_string(),
            r.eve_drop_rate.to_string(),
            r.e_th.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>, TraceError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &SUMMARY_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != SUMMARY_HEADER.len() {
            return Err(TraceError::Width {
                row,
                expected: SUMMARY_HEADER.len(),
                got: rec.len(),
            });
        }
        let num = |column, s: &str| field(row, column, s, |s| s.parse::<f64>().ok());
        out.push(SummaryRow {
            axis_value: if rec[0].is_empty() {
                None
            } else {
                Some(num("axis_value", &rec[0])?)
            },
            seed: field(row, "seed", &rec[1], |s| s.parse().ok())?,
            bob_drop_rate: num("bob_drop_rate", &rec[2])?,
            eve_drop_rate: num("eve_drop_rate", &rec[3])?,
            e_th: num("e_th", &rec[4])?,
        });
    }
    Ok(out)
}

pub fn write_reference_csv<W: Write>(writer: W, refset: &ReferenceSet) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REFERENCE_HEADER)?;
    for (i, (ab, ae)) in refset.e_ab_ref.iter().zip(&refset.e_ae_ref).enumerate() {
        w.write_record([(i + 1).to_string(), ab.to_string(), ae.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a reference set; rows may come in any order and `pair` is ignored.
pub fn read_reference_csv<R: Read>(input: R) -> Result<ReferenceSet, TraceError> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &REFERENCE_HEADER)?;
    let mut out = ReferenceSet::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != REFERENCE_HEADER.len() {
            return Err(TraceError::Width {
                row,
                expected: REFERENCE_HEADER.len(),
                got: rec.len(),
            });
        }
        field(row, "pair", &rec[0], |s| s.parse::<u64>().ok())?;
        out.e_ab_ref.push(field(row, "e_ab", &rec[1], |s| s.parse().ok())?);
        out.e_ae_ref.push(field(row, "e_ae", &rec[2], |s| s.parse().ok())?);
    }
    Ok(out)
}

pub fn write_aggregate_csv<W: Write>(writer: W, rows: &[SweepAggregate]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for a in rows {
        w.write_record([
            a.axis_value.to_string(),
            a.cells.to_string(),
            a.failures.to_string(),
            a.bob_mean.to_string(),
            a.bob_std.to_string(),
            a.eve_mean.to_string(),
            a.eve_std.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
