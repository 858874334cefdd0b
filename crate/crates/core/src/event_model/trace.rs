use std::io::{self, BufRead, Write};

use thiserror::Error;

use super::{EventError, SyscallRecord};

/// Errors raised while reading a trace file.
#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp {ts} does not increase over previous {prev}")]
    NonMonotonicTimestamp { line: usize, ts: u64, prev: u64 },
    #[error("line {line}: {source}")]
    InvalidRecord { line: usize, source: EventError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses a line-delimited trace: one JSON syscall record per line, unknown
/// keys rejected, timestamps strictly increasing.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<SyscallRecord>, TraceError> {
    let mut records = Vec::new();
    let mut prev_ts: Option<u64> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SyscallRecord =
            serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
        rec.validate()
            .map_err(|source| TraceError::InvalidRecord { line: line_no, source })?;
        if let Some(prev) = prev_ts {
            if rec.timestamp <= prev {
                return Err(TraceError::NonMonotonicTimestamp {
                    line: line_no,
                    ts: rec.timestamp,
                    prev,
                });
            }
        }
        prev_ts = Some(rec.timestamp);
        records.push(rec);
    }
    Ok(records)
}

/// Writes records in the trace format, one JSON object per line.
pub fn write_trace<W: Write>(mut writer: W, records: &[SyscallRecord]) -> io::Result<()> {
    for rec in records {
        let line = serde_json::to_string(rec).expect("record serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{KernelObjectId, Syscall, SyscallFlags};

    fn record(ts: u64) -> SyscallRecord {
        SyscallRecord {
            syscall: Syscall::Read,
            subject: KernelObjectId::task(1),
            object: Some(KernelObjectId::file(1, 5)),
            path_depth: None,
            flags: SyscallFlags::default(),
            net: None,
            timestamp: ts,
            fail_at_ordinal: None,
        }
    }

    #[test]
    fn empty_stream_yields_empty_sequence() {
        let records = parse_trace(io::Cursor::new("")).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn three_lines_round_trip_in_order() {
        let records = vec![record(1), record(2), record(3)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &records).unwrap();
        let parsed = parse_trace(io::Cursor::new(buf)).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn non_monotonic_timestamp_names_the_line() {
        let records = vec![record(5), record(5)];
        let mut buf = Vec::new();
        write_trace(&mut buf, &records).unwrap();
        match parse_trace(io::Cursor::new(buf)) {
            Err(TraceError::NonMonotonicTimestamp { line, ts, prev }) => {
                assert_eq!((line, ts, prev), (2, 5, 5));
            }
            other => panic!("expected NonMonotonicTimestamp, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_number() {
        let line = r#"{"syscall":"read","subject":{"kind":"task","local_id":1},"object":{"kind":"file","fs_uuid":1,"local_id":5},"timestamp":1,"bogus":true}"#;
        match parse_trace(io::Cursor::new(line)) {
            Err(TraceError::Parse { line, msg }) => {
                assert_eq!(line, 1);
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_syscall_name_is_rejected() {
        let line = r#"{"syscall":"openat2","subject":{"kind":"task","local_id":1},"timestamp":1}"#;
        assert!(matches!(
            parse_trace(io::Cursor::new(line)),
            Err(TraceError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn invalid_record_is_reported_with_line() {
        // read with a path_depth violates the record invariants
        let line = r#"{"syscall":"read","subject":{"kind":"task","local_id":1},"object":{"kind":"file","fs_uuid":1,"local_id":5},"path_depth":2,"timestamp":1}"#;
        assert!(matches!(
            parse_trace(io::Cursor::new(line)),
            Err(TraceError::InvalidRecord { line: 1, .. })
        ));
    }
}
