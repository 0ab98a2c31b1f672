//! CSV formats for event loss tables ("event_id,loss") and year loss
//! tables ("trial_id,loss").
//!
//! Losses are printed with Rust's shortest round-trip representation, so
//! reading a written file reproduces the exact wide-precision values.
//! FT1 terms are not part of the ELT CSV; they travel in the portfolio
//! config.

use std::io::{BufRead, Write};

use super::IoError;
use crate::model::{EltTerms, EventId, EventLossTable, ModelError, YearLossTable, YltScope};
use crate::scalar::Scalar;

const ELT_HEADER: &str = "event_id,loss";
const YLT_HEADER: &str = "trial_id,loss";

fn csv_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Csv { line, message: message.into() }
}

/// Splits a data row into exactly two comma-separated fields.
fn two_fields(row: &str, line: usize) -> Result<(&str, &str), IoError> {
    let mut parts = row.split(',');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((a.trim(), b.trim())),
        _ => Err(csv_err(line, format!("expected 2 comma-separated fields, got '{row}'"))),
    }
}

fn expect_header(
    lines: &mut impl Iterator<Item = std::io::Result<String>>,
    header: &str,
) -> Result<(), IoError> {
    match lines.next() {
        Some(Ok(first)) if first.trim_end() == header => Ok(()),
        Some(Ok(first)) => Err(csv_err(1, format!("expected header '{header}', got '{first}'"))),
        Some(Err(err)) => Err(IoError::Io(err)),
        None => Err(csv_err(1, format!("empty file, expected header '{header}'"))),
    }
}

/// Writes an event loss table as "event_id,loss" rows in event-id order.
pub fn write_elt_csv(elt: &EventLossTable, sink: &mut impl Write) -> Result<(), IoError> {
    writeln!(sink, "{ELT_HEADER}")?;
    for &(event, loss) in elt.entries() {
        writeln!(sink, "{event},{loss}")?;
    }
    Ok(())
}

/// Reads an event loss table from CSV. The id and FT1 terms come from the
/// caller because the CSV carries only event/loss pairs.
pub fn read_elt_csv(
    source: &mut impl BufRead,
    elt_id: u32,
    terms: EltTerms,
) -> Result<EventLossTable, IoError> {
    let mut lines = source.lines();
    expect_header(&mut lines, ELT_HEADER)?;
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (index, row) in lines.enumerate() {
        let line = index + 2;
        let row = row?;
        if row.trim().is_empty() {
            continue;
        }
        let (id_field, loss_field) = two_fields(&row, line)?;
        let id: u32 = id_field
            .parse()
            .map_err(|_| csv_err(line, format!("invalid event id '{id_field}'")))?;
        let loss: f64 = loss_field
            .parse()
            .map_err(|_| csv_err(line, format!("invalid loss '{loss_field}'")))?;
        if !loss.is_finite() {
            return Err(csv_err(line, format!("loss '{loss_field}' is not finite")));
        }
        if !(loss > 0.0) {
            return Err(csv_err(line, format!("loss {loss} is not positive")));
        }
        if !seen.insert(id) {
            return Err(csv_err(line, format!("duplicate event id {id}")));
        }
        entries.push((EventId(id), loss));
    }
    Ok(EventLossTable::new(elt_id, entries, terms)?)
}

/// Writes a year loss table as "trial_id,loss" rows in trial order.
/// Losses are widened to f64 before printing, so the file round-trips
/// exactly for both precisions.
pub fn write_ylt_csv<S: Scalar>(
    ylt: &YearLossTable<S>,
    sink: &mut impl Write,
) -> Result<(), IoError> {
    if ylt.losses.is_empty() {
        return Err(IoError::Model(ModelError::EmptyTable("year loss table")));
    }
    writeln!(sink, "{YLT_HEADER}")?;
    for &(trial_id, loss) in &ylt.losses {
        writeln!(sink, "{trial_id},{}", loss.to_wide())?;
    }
    Ok(())
}

/// Reads a year loss table from CSV under the given scope label (the CSV
/// itself carries no scope).
pub fn read_ylt_csv(
    source: &mut impl BufRead,
    scope: YltScope,
) -> Result<YearLossTable<crate::Wide>, IoError> {
    let mut lines = source.lines();
    expect_header(&mut lines, YLT_HEADER)?;
    let mut losses = Vec::new();
    for (index, row) in lines.enumerate() {
        let line = index + 2;
        let row = row?;
        if row.trim().is_empty() {
            continue;
        }
        let (id_field, loss_field) = two_fields(&row, line)?;
        let trial_id: u64 = id_field
            .parse()
            .map_err(|_| csv_err(line, format!("invalid trial id '{id_field}'")))?;
        let loss: f64 = loss_field
            .parse()
            .map_err(|_| csv_err(line, format!("invalid loss '{loss_field}'")))?;
        if !loss.is_finite() || loss < 0.0 {
            return Err(csv_err(
                line,
                format!("loss '{loss_field}' is not a finite non-negative number"),
            ));
        }
        losses.push((trial_id, loss));
    }
    if losses.is_empty() {
        return Err(IoError::Model(ModelError::EmptyTable("year loss table")));
    }
    Ok(YearLossTable { scope, losses })
}
