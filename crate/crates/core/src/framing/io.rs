use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EventFrame, PupilLabel, Sample};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FRM0";
const HEADER_BYTES: usize = 16;
const SAMPLES_HEADER: &str = "frame_idx,x,y,visible";

/// Encodes frames sharing one geometry and window. An empty slice encodes
/// a zero-geometry header.
pub fn encode_frames(frames: &[EventFrame]) -> Result<Vec<u8>> {
    let (w, h, window) = frames
        .first()
        .map(|f| (f.width, f.height, f.window))
        .unwrap_or((0, 0, 0));
    let cells = w as usize * h as usize;
    let mut out = Vec::with_capacity(HEADER_BYTES + frames.len() * (12 + cells));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out.extend_from_slice(&(window as u32).to_le_bytes());
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    for (i, f) in frames.iter().enumerate() {
        if (f.width, f.height, f.window) != (w, h, window) {
            return Err(Error::Shape(format!("frame {i} differs in geometry or window")));
        }
        out.extend_from_slice(&f.t_start.to_le_bytes());
        out.extend_from_slice(&f.event_count.to_le_bytes());
        out.extend(f.cells.iter().map(|&c| c as u8));
    }
    Ok(out)
}

pub fn decode_frames(bytes: &[u8]) -> Result<Vec<EventFrame>> {
    if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
        return Err(Error::malformed("offset 0", "missing FRM0 header"));
    }
    let w = u16::from_le_bytes([bytes[4], bytes[5]]);
    let h = u16::from_le_bytes([bytes[6], bytes[7]]);
    let window = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let cells = w as usize * h as usize;
    let rec = 12 + cells;
    let body = &bytes[HEADER_BYTES..];
    if body.len() != count * rec {
        return Err(Error::malformed(
            format!("offset {HEADER_BYTES}"),
            format!("expected {count} frames of {rec} bytes, found {} bytes", body.len()),
        ));
    }
    Ok(body
        .chunks_exact(rec)
        .map(|r| EventFrame {
            t_start: u64::from_le_bytes(r[0..8].try_into().unwrap()),
            event_count: u32::from_le_bytes(r[8..12].try_into().unwrap()),
            window,
            width: w,
            height: h,
            cells: r[12..].iter().map(|&b| b as i8).collect(),
        })
        .collect())
}

pub fn write_frames(frames: &[EventFrame], path: &Path) -> Result<()> {
    fs::write(path, encode_frames(frames)?).map_err(|e| Error::io(path, e))
}

pub fn read_frames(path: &Path) -> Result<Vec<EventFrame>> {
    decode_frames(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn render_samples_csv(samples: &[Sample]) -> String {
    let mut out = String::from(SAMPLES_HEADER);
    out.push('\n');
    for (i, s) in samples.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i, s.label.x, s.label.y, s.label.visible as u8);
    }
    out
}

pub fn parse_samples_csv(text: &str) -> Result<Vec<(usize, PupilLabel)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SAMPLES_HEADER => {}
        _ => return Err(Error::malformed("line 1", format!("expected `{SAMPLES_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::malformed(loc(), "expected 4 fields"));
        }
        let idx = f[0].parse().map_err(|_| Error::malformed(loc(), "bad frame_idx"))?;
        let x = f[1].parse().map_err(|_| Error::malformed(loc(), "bad x"))?;
        let y = f[2].parse().map_err(|_| Error::malformed(loc(), "bad y"))?;
        let visible = match f[3] {
            "0" => false,
            "1" => true,
            _ => return Err(Error::malformed(loc(), "visible must be 0 or 1")),
        };
        let label = if visible { PupilLabel::visible(x, y) } else { PupilLabel { x, y, visible } };
        out.push((idx, label));
    }
    Ok(out)
}

/// Writes the frames file and its label sidecar.
pub fn write_samples(samples: &[Sample], frames_path: &Path, csv_path: &Path) -> Result<()> {
    let frames: Vec<EventFrame> = samples.iter().map(|s| s.frame.clone()).collect();
    write_frames(&frames, frames_path)?;
    fs::write(csv_path, render_samples_csv(samples)).map_err(|e| Error::io(csv_path, e))
}

pub fn read_samples(frames_path: &Path, csv_path: &Path, user: u32) -> Result<Vec<Sample>> {
    let frames = read_frames(frames_path)?;
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let labels = parse_samples_csv(&text)?;
    if labels.len() != frames.len() {
        return Err(Error::malformed(
            csv_path.display().to_string(),
            format!("{} labels for {} frames", labels.len(), frames.len()),
        ));
    }
    labels
        .into_iter()
        .zip(frames)
        .enumerate()
        .map(|(i, ((idx, label), frame))| {
            if idx != i {
                return Err(Error::malformed(
                    format!("{} row {}", csv_path.display(), i + 2),
                    "frame_idx out of order",
                ));
            }
            Ok(Sample { user, frame, label })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let mut a = EventFrame::zeros(5, 3);
        a.cells[4] = -7;
        a.event_count = 151;
        let b = EventFrame { t_start: 5000, ..a.clone() };
        let bytes = encode_frames(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * (12 + 15));
        assert_eq!(decode_frames(&bytes).unwrap(), vec![a, b]);
        assert!(decode_frames(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn mixed_geometry_is_rejected() {
        assert!(encode_frames(&[EventFrame::zeros(2, 2), EventFrame::zeros(3, 2)]).is_err());
    }
}
