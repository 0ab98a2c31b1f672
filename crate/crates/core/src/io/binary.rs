//! Binary year event table format, little-endian throughout.
//!
//! Layout:
//!
//! ```text
//! header   magic "AGRKYET1" (8 bytes), version u32, num_trials u64,
//!          catalog_size u32, events_total u64          = 32 bytes
//! trial    trial_id u64, event_count u32,
//!          then event_count * (event_id u32, timestamp f32)
//! ```
//!
//! Timestamps are stored as f32; they only order events and never enter
//! loss arithmetic.

use std::io::{ErrorKind, Read, Write};

use super::IoError;
use crate::model::{validate_yet, EventId, ModelError, Trial, TrialEvent, YearEventTable};

pub const YET_MAGIC: [u8; 8] = *b"AGRKYET1";
pub const YET_VERSION: u32 = 1;
/// Fixed header size: magic + version + num_trials + catalog_size + events_total.
pub const YET_HEADER_BYTES: u64 = 8 + 4 + 8 + 4 + 8;

/// Per-trial fixed prefix: trial_id u64 + event_count u32.
const TRIAL_PREFIX_BYTES: u64 = 12;
/// Per-event record: event_id u32 + timestamp f32.
const EVENT_BYTES: u64 = 8;

/// Trials vecs are preallocated up to this many entries; a corrupt header
/// claiming more trials must not drive a giant allocation.
const MAX_PREALLOC_TRIALS: usize = 1 << 20;
/// Events are read through a scratch buffer of at most this many records.
const EVENT_CHUNK: usize = 1 << 16;

/// Writes `yet` in the binary format and returns the byte count.
///
/// The table is expected to already satisfy [`validate_yet`]; only the
/// non-empty invariant is re-checked here.
pub fn write_yet(yet: &YearEventTable, sink: &mut impl Write) -> Result<u64, IoError> {
    if yet.trials.is_empty() {
        return Err(IoError::Model(ModelError::EmptyTable("year event table")));
    }
    let mut header = Vec::with_capacity(YET_HEADER_BYTES as usize);
    header.extend_from_slice(&YET_MAGIC);
    header.extend_from_slice(&YET_VERSION.to_le_bytes());
    header.extend_from_slice(&(yet.trials.len() as u64).to_le_bytes());
    header.extend_from_slice(&yet.catalog_size.to_le_bytes());
    header.extend_from_slice(&yet.total_events().to_le_bytes());
    sink.write_all(&header)?;

    let mut written = YET_HEADER_BYTES;
    let mut buf: Vec<u8> = Vec::new();
    for trial in &yet.trials {
        buf.clear();
        buf.reserve(TRIAL_PREFIX_BYTES as usize + trial.events.len() * EVENT_BYTES as usize);
        buf.extend_from_slice(&trial.trial_id.to_le_bytes());
        buf.extend_from_slice(&(trial.events.len() as u32).to_le_bytes());
        for ev in &trial.events {
            buf.extend_from_slice(&ev.event.0.to_le_bytes());
            buf.extend_from_slice(&ev.timestamp.to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    Ok(written)
}

/// Reads a field of `buf.len()` bytes starting at `*offset`, mapping a
/// clean EOF to [`IoError::Truncated`] at the field's start offset.
fn fill(source: &mut impl Read, buf: &mut [u8], offset: &mut u64) -> Result<(), IoError> {
    source.read_exact(buf).map_err(|err| match err.kind() {
        ErrorKind::UnexpectedEof => IoError::Truncated { offset: *offset },
        _ => IoError::Io(err),
    })?;
    *offset += buf.len() as u64;
    Ok(())
}

fn le_u32(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
}

fn le_u64(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
}

/// Reads a year event table, streaming events through a bounded scratch
/// buffer so peak memory stays near the size of the returned table.
///
/// The returned table passes [`validate_yet`]; a structurally readable
/// file with invariant violations is rejected as [`IoError::InvalidTable`].
pub fn read_yet(source: &mut impl Read) -> Result<YearEventTable, IoError> {
    let mut offset = 0u64;
    let mut header = [0u8; YET_HEADER_BYTES as usize];
    fill(source, &mut header, &mut offset)?;
    if header[0..8] != YET_MAGIC {
        return Err(IoError::BadMagic { found: header[0..8].try_into().expect("8 bytes") });
    }
    let version = le_u32(&header[8..12]);
    if version != YET_VERSION {
        return Err(IoError::VersionMismatch { found: version });
    }
    let num_trials = le_u64(&header[12..20]);
    let catalog_size = le_u32(&header[20..24]);
    let events_total = le_u64(&header[24..32]);
    if num_trials == 0 {
        return Err(IoError::Model(ModelError::EmptyTable("year event table")));
    }
    if catalog_size == 0 {
        return Err(IoError::Model(ModelError::ZeroCatalog));
    }

    let mut trials: Vec<Trial> =
        Vec::with_capacity((num_trials as usize).min(MAX_PREALLOC_TRIALS));
    let mut scratch = vec![0u8; EVENT_CHUNK * EVENT_BYTES as usize];
    let mut events_found = 0u64;
    for _ in 0..num_trials {
        let mut prefix = [0u8; TRIAL_PREFIX_BYTES as usize];
        fill(source, &mut prefix, &mut offset)?;
        let trial_id = le_u64(&prefix[0..8]);
        let event_count = le_u32(&prefix[8..12]) as usize;
        let mut events: Vec<TrialEvent> =
            Vec::with_capacity(event_count.min(EVENT_CHUNK));
        let mut remaining = event_count;
        while remaining > 0 {
            let take = remaining.min(EVENT_CHUNK);
            let chunk = &mut scratch[..take * EVENT_BYTES as usize];
            fill(source, chunk, &mut offset)?;
            for record in chunk.chunks_exact(EVENT_BYTES as usize) {
                events.push(TrialEvent {
                    event: EventId(le_u32(&record[0..4])),
                    timestamp: f32::from_le_bytes(record[4..8].try_into().expect("4 bytes")),
                });
            }
            remaining -= take;
        }
        events_found += event_count as u64;
        trials.push(Trial { trial_id, events });
    }
    if events_found != events_total {
        return Err(IoError::CountMismatch {
            what: "events",
            declared: events_total,
            found: events_found,
        });
    }

    let yet = YearEventTable::new(trials, catalog_size)?;
    let violations = validate_yet(&yet);
    if !violations.is_empty() {
        return Err(IoError::InvalidTable(violations));
    }
    Ok(yet)
}
