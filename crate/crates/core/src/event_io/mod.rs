//! Event streams, label tracks, their file formats and a synthetic eye
//! sequence generator.

mod format;
mod synth;

pub use format::{
    decode_binary, encode_binary, parse_csv, parse_labels_csv, read_events, read_labels,
    render_csv, render_labels_csv, write_events, write_labels, EventFormat, BINARY_HEADER_BYTES,
    BINARY_RECORD_BYTES,
};
pub use synth::{synth_eye_sequence, EyelidBand, SynthParams, Trajectory, Waypoint};

use crate::error::{Error, Result};

/// Default sensor geometry (DAVIS346-class).
pub const SENSOR_WIDTH: u16 = 346;
pub const SENSOR_HEIGHT: u16 = 260;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(v: i64) -> Option<Self> {
        match v {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Microseconds since stream start.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

/// A time-ordered event sequence with its sensor geometry.
///
/// Fields are public so that externally produced data can be inspected with
/// [`validate_stream`]; [`EventStream::new`] is the checked constructor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u16, height: u16, events: Vec<Event>) -> Result<Self> {
        let stream = EventStream {
            width,
            height,
            events,
        };
        stream.check()?;
        Ok(stream)
    }

    pub fn empty(width: u16, height: u16) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Timestamp one past the last event, or 0 for an empty stream.
    pub fn end_time(&self) -> u64 {
        self.events.last().map(|e| e.t + 1).unwrap_or(0)
    }

    /// Fails on the first invariant violation.
    pub fn check(&self) -> Result<()> {
        match validate_stream(self).violations.first() {
            None => Ok(()),
            Some(Violation::OutOfRange { index }) => {
                let e = self.events[*index];
                Err(Error::OutOfRange {
                    index: *index,
                    x: e.x as i64,
                    y: e.y as i64,
                    width: self.width as u32,
                    height: self.height as u32,
                })
            }
            Some(Violation::NonMonotonic { index }) => Err(Error::NonMonotonic { index: *index }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    OutOfRange { index: usize },
    NonMonotonic { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub histogram_bin_us: u64,
    /// Event count per time bin, starting at t = 0.
    pub rate_histogram: Vec<u64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const HISTOGRAM_BIN_US: u64 = 1000;

/// Lists every invariant violation without touching the stream.
pub fn validate_stream(stream: &EventStream) -> ValidationReport {
    let mut violations = Vec::new();
    let mut histogram: Vec<u64> = Vec::new();
    let mut prev_t = 0u64;
    for (i, e) in stream.events.iter().enumerate() {
        if e.x >= stream.width || e.y >= stream.height {
            violations.push(Violation::OutOfRange { index: i });
        }
        if i > 0 && e.t < prev_t {
            violations.push(Violation::NonMonotonic { index: i });
        }
        prev_t = e.t;
        let bin = (e.t / HISTOGRAM_BIN_US) as usize;
        if bin >= histogram.len() {
            histogram.resize(bin + 1, 0);
        }
        histogram[bin] += 1;
    }
    ValidationReport {
        violations,
        histogram_bin_us: HISTOGRAM_BIN_US,
        rate_histogram: histogram,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelEntry {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Pupil-center ground truth sampled at a fixed rate, in sensor pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub rate_hz: f64,
    pub entries: Vec<LabelEntry>,
}

impl LabelTrack {
    pub fn new(rate_hz: f64, entries: Vec<LabelEntry>) -> Result<Self> {
        if let Some(i) = entries.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::NonMonotonic { index: i + 1 });
        }
        Ok(LabelTrack { rate_hz, entries })
    }

    /// Entry with the timestamp nearest to `t`, ties resolved to the earlier one.
    pub fn nearest(&self, t: u64) -> Option<&LabelEntry> {
        let idx = self.entries.partition_point(|e| e.t < t);
        let after = self.entries.get(idx);
        let before = idx.checked_sub(1).and_then(|i| self.entries.get(i));
        match (before, after) {
            (Some(b), Some(a)) => {
                if t - b.t <= a.t - t {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (Some(b), None) => Some(b),
            (None, a) => a,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: u64, x: u16, y: u16) -> Event {
        Event::new(t, x, y, Polarity::On)
    }

    #[test]
    fn valid_stream_has_empty_report() {
        let s = EventStream::new(10, 10, (0..20).map(|i| ev(i * 10, 1, 2)).collect()).unwrap();
        assert!(validate_stream(&s).is_valid());
    }

    #[test]
    fn swapped_timestamps_cite_later_index() {
        let mut events: Vec<Event> = (0..10).map(|i| ev(i * 10, 0, 0)).collect();
        events.swap(5, 6);
        let s = EventStream {
            width: 4,
            height: 4,
            events,
        };
        let report = validate_stream(&s);
        assert_eq!(report.violations, vec![Violation::NonMonotonic { index: 6 }]);
        assert!(matches!(s.check(), Err(Error::NonMonotonic { index: 6 })));
    }

    #[test]
    fn histogram_totals_equal_event_count() {
        let events: Vec<Event> = (0..977).map(|i| ev(i * 37 + (i % 5) * 3, 0, 0)).collect();
        let s = EventStream::new(2, 2, events).unwrap();
        let report = validate_stream(&s);
        // Independent count: bin each event directly.
        let mut expected = vec![0u64; (s.events.last().unwrap().t / 1000 + 1) as usize];
        for e in &s.events {
            expected[(e.t / 1000) as usize] += 1;
        }
        assert_eq!(report.rate_histogram, expected);
        assert_eq!(report.rate_histogram.iter().sum::<u64>(), 977);
    }

    #[test]
    fn out_of_range_is_reported() {
        let s = EventStream {
            width: 346,
            height: 260,
            events: vec![ev(0, 346, 0)],
        };
        assert_eq!(
            validate_stream(&s).violations,
            vec![Violation::OutOfRange { index: 0 }]
        );
    }

    #[test]
    fn nearest_label_breaks_ties_early() {
        let track = LabelTrack::new(
            200.0,
            vec![
                LabelEntry { t: 0, x: 1.0, y: 1.0, visible: true },
                LabelEntry { t: 10, x: 2.0, y: 2.0, visible: true },
            ],
        )
        .unwrap();
        assert_eq!(track.nearest(5).unwrap().t, 0);
        assert_eq!(track.nearest(6).unwrap().t, 10);
        assert_eq!(track.nearest(100).unwrap().t, 10);
    }
}
