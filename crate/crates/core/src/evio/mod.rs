//! Event-stream ingestion and conversion to temporal voxel grids.

mod format;
mod voxel;

pub use format::{parse_events, read_events_file, serialize_events, EventFormat, ParseOptions};
pub use voxel::{normalize_timestamps, voxelize, VoxelGrid, DEFAULT_BINS};

#[derive(Debug, thiserror::Error)]
pub enum EvioError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("event {index} at ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds { index: usize, x: u64, y: u64, width: u32, height: u32 },
    #[error("event {index}: polarity {value} is not -1 or +1")]
    BadPolarity { index: usize, value: i64 },
    #[error("bad magic, expected EVT1")]
    BadMagic,
    #[error("truncated event file: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("timestamps decrease at event {0}")]
    Unsorted(usize),
    #[error("bin count must be at least 1")]
    BadBins,
}

pub type Result<T, E = EvioError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    pub fn from_sign(value: i64) -> Option<Self> {
        match value {
            -1 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }
}

/// A single brightness-change event; `t` is in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, p: Polarity) -> Self {
        Self { t, x, y, p }
    }
}

/// Time-ordered events from a `width × height` sensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventStream {
    width: u32,
    height: u32,
    events: Vec<Event>,
}

impl EventStream {
    /// Validates bounds and ordering. Use [`EventStream::from_unsorted`] when
    /// the input may be out of order.
    pub fn new(width: u32, height: u32, events: Vec<Event>) -> Result<Self> {
        check_bounds(width, height, &events)?;
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(EvioError::Unsorted(i + 1));
        }
        Ok(Self { width, height, events })
    }

    /// Validates bounds, then stable-sorts by timestamp. Already-sorted input
    /// is kept in its original order.
    pub fn from_unsorted(width: u32, height: u32, mut events: Vec<Event>) -> Result<Self> {
        check_bounds(width, height, &events)?;
        if events.windows(2).any(|w| w[1].t < w[0].t) {
            events.sort_by_key(|e| e.t);
        }
        Ok(Self { width, height, events })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, events: Vec::new() }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn polarity_sum(&self) -> i64 {
        self.events.iter().map(|e| e.p.sign() as i64).sum()
    }
}

fn check_bounds(width: u32, height: u32, events: &[Event]) -> Result<()> {
    for (index, e) in events.iter().enumerate() {
        if e.x as u32 >= width || e.y as u32 >= height {
            return Err(EvioError::OutOfBounds { index, x: e.x as u64, y: e.y as u64, width, height });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsorted_input_is_sorted_stably() {
        let ev = vec![
            Event::new(5, 0, 0, Polarity::Positive),
            Event::new(1, 1, 0, Polarity::Negative),
            Event::new(5, 2, 0, Polarity::Negative),
        ];
        assert!(matches!(EventStream::new(4, 4, ev.clone()), Err(EvioError::Unsorted(1))));
        let s = EventStream::from_unsorted(4, 4, ev).unwrap();
        let xs: Vec<u16> = s.events().iter().map(|e| e.x).collect();
        assert_eq!(xs, vec![1, 0, 2]);
    }
}
