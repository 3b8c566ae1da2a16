use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Event, EventStream, LabelEntry, LabelTrack, Polarity};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"EVT0";
pub const BINARY_HEADER_BYTES: usize = 16;
pub const BINARY_RECORD_BYTES: usize = 13;

const CSV_HEADER: &str = "t_us,x,y,p";
const LABELS_HEADER: &str = "t_us,x,y,visible";

/// On-disk event encodings. CSV carries no geometry, so it is declared here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv { width: u16, height: u16 },
    Binary,
}

impl EventFormat {
    /// Picks the format from the file extension (`.csv` or anything else as binary).
    pub fn from_path(path: &Path, width: u16, height: u16) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => EventFormat::Csv { width, height },
            _ => EventFormat::Binary,
        }
    }
}

pub fn read_events(path: &Path, format: EventFormat) -> Result<EventStream> {
    match format {
        EventFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes)
        }
        EventFormat::Csv { width, height } => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_csv(&text, width, height)
        }
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: EventFormat) -> Result<()> {
    let bytes = match format {
        EventFormat::Binary => encode_binary(stream),
        EventFormat::Csv { .. } => render_csv(stream).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_binary(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_HEADER_BYTES + BINARY_RECORD_BYTES * stream.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&stream.width.to_le_bytes());
    out.extend_from_slice(&stream.height.to_le_bytes());
    out.extend_from_slice(&(stream.events.len() as u64).to_le_bytes());
    for e in &stream.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.sign() as u8);
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EventStream> {
    if bytes.len() < BINARY_HEADER_BYTES || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::malformed("offset 0", "missing EVT0 header"));
    }
    let width = u16::from_le_bytes([bytes[4], bytes[5]]);
    let height = u16::from_le_bytes([bytes[6], bytes[7]]);
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[BINARY_HEADER_BYTES..];
    if body.len() != count.saturating_mul(BINARY_RECORD_BYTES) {
        return Err(Error::malformed(
            format!("offset {BINARY_HEADER_BYTES}"),
            format!(
                "header declares {count} events but body holds {} bytes",
                body.len()
            ),
        ));
    }
    let mut events = Vec::with_capacity(count);
    for (i, rec) in body.chunks_exact(BINARY_RECORD_BYTES).enumerate() {
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let polarity = Polarity::from_sign(rec[12] as i8 as i64).ok_or_else(|| {
            Error::malformed(
                format!("offset {}", BINARY_HEADER_BYTES + i * BINARY_RECORD_BYTES + 12),
                format!("polarity byte {} is not +1/-1", rec[12] as i8),
            )
        })?;
        events.push(Event { t, x, y, polarity });
    }
    EventStream::new(width, height, events)
}

pub fn render_csv(stream: &EventStream) -> String {
    let mut out = String::with_capacity(16 * (stream.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for e in &stream.events {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.sign());
    }
    out
}

pub fn parse_csv(text: &str, width: u16, height: u16) -> Result<EventStream> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::malformed("line 1", format!("expected header `{CSV_HEADER}`"))),
    }
    let mut events = Vec::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::malformed(loc(), "expected 4 fields"));
        }
        let t: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::malformed(loc(), "bad timestamp"))?;
        let x: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::malformed(loc(), "bad x"))?;
        let y: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::malformed(loc(), "bad y"))?;
        let p: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::malformed(loc(), "bad polarity"))?;
        let polarity =
            Polarity::from_sign(p).ok_or_else(|| Error::malformed(loc(), "polarity must be 1 or -1"))?;
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            return Err(Error::OutOfRange {
                index: events.len(),
                x,
                y,
                width: width as u32,
                height: height as u32,
            });
        }
        events.push(Event {
            t,
            x: x as u16,
            y: y as u16,
            polarity,
        });
    }
    EventStream::new(width, height, events)
}

pub fn render_labels_csv(track: &LabelTrack) -> String {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for e in &track.entries {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.visible as u8);
    }
    out
}

/// Parses a label CSV; the sample rate is inferred from the first spacing.
pub fn parse_labels_csv(text: &str) -> Result<LabelTrack> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LABELS_HEADER => {}
        _ => {
            return Err(Error::malformed(
                "line 1",
                format!("expected header `{LABELS_HEADER}`"),
            ))
        }
    }
    let mut entries = Vec::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::malformed(loc(), "expected 4 fields"));
        }
        let t = f[0].parse().map_err(|_| Error::malformed(loc(), "bad timestamp"))?;
        let x = f[1].parse().map_err(|_| Error::malformed(loc(), "bad x"))?;
        let y = f[2].parse().map_err(|_| Error::malformed(loc(), "bad y"))?;
        let visible = match f[3] {
            "0" => false,
            "1" => true,
            _ => return Err(Error::malformed(loc(), "visible must be 0 or 1")),
        };
        entries.push(LabelEntry { t, x, y, visible });
    }
    let rate_hz = match entries.as_slice() {
        [a, b, ..] if b.t > a.t => 1e6 / (b.t - a.t) as f64,
        _ => 0.0,
    };
    LabelTrack::new(rate_hz, entries)
}

pub fn read_labels(path: &Path) -> Result<LabelTrack> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_csv(&text)
}

pub fn write_labels(track: &LabelTrack, path: &Path) -> Result<()> {
    fs::write(path, render_labels_csv(track)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_csv_body_gives_empty_stream() {
        let s = parse_csv("t_us,x,y,p\n", 346, 260).unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!((s.width, s.height), (346, 260));
    }

    #[test]
    fn width_is_exclusive() {
        let err = parse_csv("t_us,x,y,p\n0,346,0,1\n", 346, 260).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { x: 346, .. }));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let err = parse_csv("t_us,x,y,p\n0,1,1,1\n5,x,1,1\n", 346, 260).unwrap_err();
        match err {
            Error::Malformed { location, .. } => assert_eq!(location, "line 3"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv("t_us,x,y,p\n0,1,1,0\n", 4, 4).is_err());
    }

    #[test]
    fn non_monotonic_csv_reports_index() {
        let err = parse_csv("t_us,x,y,p\n10,1,1,1\n20,1,1,-1\n15,0,0,1\n", 4, 4).unwrap_err();
        assert!(matches!(err, Error::NonMonotonic { index: 2 }));
    }

    #[test]
    fn binary_sizes() {
        let empty = EventStream::empty(346, 260);
        assert_eq!(encode_binary(&empty).len(), 16);
        let one = EventStream::new(346, 260, vec![Event::new(7, 3, 4, Polarity::Off)]).unwrap();
        let bytes = encode_binary(&one);
        assert_eq!(bytes.len(), 16 + 13);
        assert_eq!(&bytes[..4], b"EVT0");
        assert_eq!(bytes[28] as i8, -1);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let one = EventStream::new(8, 8, vec![Event::new(7, 3, 4, Polarity::On)]).unwrap();
        let bytes = encode_binary(&one);
        assert!(decode_binary(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[28] = 3;
        assert!(matches!(decode_binary(&bad), Err(Error::Malformed { .. })));
    }

    #[test]
    fn labels_round_trip() {
        let track = LabelTrack::new(
            200.0,
            vec![
                LabelEntry { t: 2500, x: 101.25, y: 100.0, visible: true },
                LabelEntry { t: 7500, x: 0.1 + 0.2, y: 3.0, visible: false },
            ],
        )
        .unwrap();
        let back = parse_labels_csv(&render_labels_csv(&track)).unwrap();
        assert_eq!(back, track);
    }
}
