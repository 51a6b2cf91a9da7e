//! Stream serialization: CSV and a compact little-endian binary framing.
//!
//! CSV files start with `# key: value` comment lines carrying the stream
//! metadata, then the header `detector_id,sequence_index,timestamp_ns`.
//! One CSV file may hold several detectors. A binary file holds one
//! stream: the magic `RPSTAG01`, detector id (u8), sequences (u64), period
//! and resolution (f64), digest (u32 length + UTF-8), record count (u64),
//! then per record a u32 sequence index and a u64 timestamp in ticks.

use super::{StreamMetadata, TimeTag, TimeTagStream};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

const MAGIC: &[u8; 8] = b"RPSTAG01";
pub const CSV_HEADER: &str = "detector_id,sequence_index,timestamp_ns";

pub fn write_csv(streams: &[&TimeTagStream], mut w: impl Write) -> Result<()> {
    let first = streams
        .first()
        .ok_or_else(|| Error::Invalid("no streams to write".into()))?;
    if streams.iter().any(|s| !s.meta.compatible(&first.meta)) {
        return Err(Error::Mismatch("streams in one file must share their metadata".into()));
    }
    let m = &first.meta;
    let ids: Vec<String> = streams.iter().map(|s| s.meta.detector_id.to_string()).collect();
    writeln!(w, "# digest: {}", m.digest)?;
    writeln!(w, "# sequences: {}", m.sequences)?;
    writeln!(w, "# repetition_period_ns: {}", m.repetition_period)?;
    writeln!(w, "# resolution_ns: {}", m.resolution)?;
    writeln!(w, "# detectors: {}", ids.join(","))?;
    writeln!(w, "{CSV_HEADER}")?;
    for s in streams {
        for r in &s.records {
            writeln!(w, "{},{},{}", s.meta.detector_id, r.sequence_index, s.timestamp_ns(r))?;
        }
    }
    Ok(())
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

/// Read all streams of a CSV file, ordered by detector id.
pub fn read_csv(r: impl BufRead) -> Result<Vec<TimeTagStream>> {
    let mut header: BTreeMap<String, String> = BTreeMap::new();
    let mut records: BTreeMap<u8, Vec<TimeTag>> = BTreeMap::new();
    let mut meta: Option<StreamMetadata> = None;
    let mut seen_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !seen_header {
            if trimmed != CSV_HEADER {
                return Err(format_err(n, format!("expected header `{CSV_HEADER}`")));
            }
            seen_header = true;
            let get = |k: &str| -> Result<&String> {
                header
                    .get(k)
                    .ok_or_else(|| format_err(n, format!("missing `# {k}:` header line")))
            };
            let parse_f = |k: &str| -> Result<f64> {
                get(k)?.parse().map_err(|_| format_err(n, format!("bad value for {k}")))
            };
            let m = StreamMetadata {
                detector_id: 0,
                sequences: get("sequences")?
                    .parse()
                    .map_err(|_| format_err(n, "bad value for sequences"))?,
                repetition_period: parse_f("repetition_period_ns")?,
                resolution: parse_f("resolution_ns")?,
                digest: header.get("digest").cloned().unwrap_or_default(),
            };
            m.period_ticks()?;
            if let Some(ids) = header.get("detectors") {
                for id in ids.split(',').filter(|s| !s.trim().is_empty()) {
                    let id: u8 = id.trim().parse().map_err(|_| format_err(n, "bad detector id"))?;
                    records.entry(id).or_default();
                }
            }
            meta = Some(m);
            continue;
        }
        let m = meta.as_ref().expect("header seen");
        let mut f = trimmed.split(',');
        let (Some(a), Some(b), Some(c), None) = (f.next(), f.next(), f.next(), f.next()) else {
            return Err(format_err(n, "expected three comma-separated fields"));
        };
        let det: u8 = a.trim().parse().map_err(|_| format_err(n, "bad detector_id"))?;
        let seq: u64 = b.trim().parse().map_err(|_| format_err(n, "bad sequence_index"))?;
        let ts: f64 = c.trim().parse().map_err(|_| format_err(n, "bad timestamp_ns"))?;
        let ticks = ts / m.resolution;
        if !(ticks >= 0.0) || (ticks - ticks.round()).abs() > 1e-6 {
            return Err(format_err(n, "timestamp is not on the resolution grid"));
        }
        records.entry(det).or_default().push(TimeTag {
            sequence_index: seq,
            ticks: ticks.round() as u64,
        });
    }
    let meta = meta.ok_or_else(|| Error::Format(format!("missing header `{CSV_HEADER}`")))?;
    let mut out = Vec::new();
    for (id, mut recs) in records {
        recs.sort_unstable();
        let s = TimeTagStream {
            meta: StreamMetadata { detector_id: id, ..meta.clone() },
            records: recs,
        };
        s.validate()?;
        out.push(s);
    }
    if out.is_empty() {
        out.push(TimeTagStream::empty(meta));
    }
    Ok(out)
}

pub fn write_binary(s: &TimeTagStream, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[s.meta.detector_id])?;
    w.write_all(&s.meta.sequences.to_le_bytes())?;
    w.write_all(&s.meta.repetition_period.to_le_bytes())?;
    w.write_all(&s.meta.resolution.to_le_bytes())?;
    let digest = s.meta.digest.as_bytes();
    w.write_all(&(digest.len() as u32).to_le_bytes())?;
    w.write_all(digest)?;
    w.write_all(&(s.records.len() as u64).to_le_bytes())?;
    for r in &s.records {
        let seq = u32::try_from(r.sequence_index)
            .map_err(|_| Error::Format(format!("sequence index {} exceeds u32", r.sequence_index)))?;
        w.write_all(&seq.to_le_bytes())?;
        w.write_all(&r.ticks.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated binary stream: {e}")))?;
    Ok(b)
}

pub fn read_binary(mut r: impl Read) -> Result<TimeTagStream> {
    if &take::<8>(&mut r)? != MAGIC {
        return Err(Error::Format("not a binary time-tag stream (bad magic)".into()));
    }
    let detector_id = take::<1>(&mut r)?[0];
    let sequences = u64::from_le_bytes(take(&mut r)?);
    let repetition_period = f64::from_le_bytes(take(&mut r)?);
    let resolution = f64::from_le_bytes(take(&mut r)?);
    let len = u32::from_le_bytes(take(&mut r)?) as usize;
    let mut digest = vec![0u8; len];
    r.read_exact(&mut digest)
        .map_err(|e| Error::Format(format!("truncated digest: {e}")))?;
    let digest = String::from_utf8(digest).map_err(|_| Error::Format("digest is not UTF-8".into()))?;
    let n = u64::from_le_bytes(take(&mut r)?);
    let mut records = Vec::with_capacity(n.min(1 << 24) as usize);
    for _ in 0..n {
        let seq = u32::from_le_bytes(take(&mut r)?);
        let ticks = u64::from_le_bytes(take(&mut r)?);
        records.push(TimeTag { sequence_index: seq as u64, ticks });
    }
    let s = TimeTagStream {
        meta: StreamMetadata {
            detector_id,
            sequences,
            repetition_period,
            resolution,
            digest,
        },
        records,
    };
    s.validate()?;
    Ok(s)
}
