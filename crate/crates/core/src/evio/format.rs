//! On-disk event formats.
//!
//! CSV: a `width,height` header line, then one `t,x,y,p` record per line.
//! Packed binary: magic `EVT1`, `u32` width, `u32` height, `u64` count, then
//! `count × (u64 t, u16 x, u16 y, i8 p)`, all little-endian, no padding.

use std::fmt::Write as _;
use std::path::Path;

use super::{Event, EventStream, EvioError, Polarity, Result};

const MAGIC: &[u8; 4] = b"EVT1";
const RECORD_BYTES: usize = 8 + 2 + 2 + 1;
const HEADER_BYTES: usize = 4 + 4 + 4 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    PackedBinary,
}

impl EventFormat {
    /// `.csv`/`.txt` map to CSV, anything else to the packed format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => EventFormat::Csv,
            _ => EventFormat::PackedBinary,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Treat polarity 0 as negative (for dumps that encode polarity as {0, 1}).
    pub zero_as_negative: bool,
}

fn polarity(value: i64, index: usize, opts: ParseOptions) -> Result<Polarity> {
    if value == 0 && opts.zero_as_negative {
        return Ok(Polarity::Negative);
    }
    Polarity::from_sign(value).ok_or(EvioError::BadPolarity { index, value })
}

pub fn parse_events(bytes: &[u8], format: EventFormat, opts: ParseOptions) -> Result<EventStream> {
    match format {
        EventFormat::Csv => parse_csv(bytes, opts),
        EventFormat::PackedBinary => parse_binary(bytes, opts),
    }
}

pub fn serialize_events(stream: &EventStream, format: EventFormat) -> Vec<u8> {
    match format {
        EventFormat::Csv => {
            let mut s = format!("{},{}\n", stream.width(), stream.height());
            for e in stream.events() {
                writeln!(s, "{},{},{},{}", e.t, e.x, e.y, e.p.sign()).expect("write to String");
            }
            s.into_bytes()
        }
        EventFormat::PackedBinary => {
            let mut out = Vec::with_capacity(HEADER_BYTES + RECORD_BYTES * stream.len());
            out.extend_from_slice(MAGIC);
            out.extend_from_slice(&stream.width().to_le_bytes());
            out.extend_from_slice(&stream.height().to_le_bytes());
            out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
            for e in stream.events() {
                out.extend_from_slice(&e.t.to_le_bytes());
                out.extend_from_slice(&e.x.to_le_bytes());
                out.extend_from_slice(&e.y.to_le_bytes());
                out.push(e.p.sign() as u8);
            }
            out
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> EvioError {
    EvioError::MalformedRecord { line, reason: reason.into() }
}

fn parse_csv(bytes: &[u8], opts: ParseOptions) -> Result<EventStream> {
    let text = std::str::from_utf8(bytes).map_err(|_| malformed(1, "not valid UTF-8"))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing width,height header"))?;
    let dims: Vec<&str> = header.split(',').map(str::trim).collect();
    let [w, h] = dims.as_slice() else {
        return Err(malformed(1, format!("header needs 2 fields, got {}", dims.len())));
    };
    let width: u32 = w.parse().map_err(|_| malformed(1, format!("bad width {w:?}")))?;
    let height: u32 = h.parse().map_err(|_| malformed(1, format!("bad height {h:?}")))?;

    let mut events = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, x, y, p] = fields.as_slice() else {
            return Err(malformed(lineno, format!("expected 4 fields, got {}", fields.len())));
        };
        let num = |s: &str, name: &str| -> Result<i64> {
            s.parse::<i64>().map_err(|_| malformed(lineno, format!("non-numeric {name} {s:?}")))
        };
        let (t, x, y, p) = (num(t, "t")?, num(x, "x")?, num(y, "y")?, num(p, "p")?);
        let index = events.len();
        if t < 0 {
            return Err(malformed(lineno, "negative timestamp"));
        }
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 || x > u16::MAX as i64 || y > u16::MAX as i64 {
            return Err(EvioError::OutOfBounds {
                index,
                x: x.max(0) as u64,
                y: y.max(0) as u64,
                width,
                height,
            });
        }
        events.push(Event::new(t as u64, x as u16, y as u16, polarity(p, index, opts)?));
    }
    EventStream::from_unsorted(width, height, events)
}

fn parse_binary(bytes: &[u8], opts: ParseOptions) -> Result<EventStream> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(EvioError::BadMagic);
    }
    if bytes.len() < HEADER_BYTES {
        return Err(EvioError::Truncated { needed: HEADER_BYTES, found: bytes.len() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let width = u32_at(4);
    let height = u32_at(8);
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let needed = (count as u128) * RECORD_BYTES as u128 + HEADER_BYTES as u128;
    if (bytes.len() as u128) < needed {
        return Err(EvioError::Truncated { needed: needed.min(usize::MAX as u128) as usize, found: bytes.len() });
    }
    let events = bytes[HEADER_BYTES..HEADER_BYTES + count as usize * RECORD_BYTES]
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(index, r)| {
            let t = u64::from_le_bytes(r[0..8].try_into().expect("8 bytes"));
            let x = u16::from_le_bytes([r[8], r[9]]);
            let y = u16::from_le_bytes([r[10], r[11]]);
            let p = polarity(r[12] as i8 as i64, index, opts)?;
            Ok(Event::new(t, x, y, p))
        })
        .collect::<Result<Vec<_>>>()?;
    EventStream::from_unsorted(width, height, events)
}

/// Reads an event file, choosing the format from its extension.
pub fn read_events_file(path: &Path, opts: ParseOptions) -> std::io::Result<Result<EventStream>> {
    Ok(parse_events(&std::fs::read(path)?, EventFormat::from_path(path), opts))
}
