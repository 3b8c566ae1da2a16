//! Fixed-window event frames, per-user region of interest and the geometric
//! preprocessing that brings frames to network input size.

mod io;

pub use io::{
    decode_frames, encode_frames, parse_samples_csv, read_frames, read_samples, render_samples_csv,
    write_frames, write_samples,
};

use crate::error::{Error, Result};
use crate::event_io::{EventStream, LabelTrack};

pub const DEFAULT_WINDOW_US: u64 = 5_000;
pub const DEFAULT_MIN_EVENTS: u32 = 150;
pub const ROI_WIDTH: u16 = 157;
pub const ROI_HEIGHT: u16 = 90;

/// Signed net-polarity image accumulated over one time window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFrame {
    pub t_start: u64,
    pub window: u64,
    pub width: u16,
    pub height: u16,
    /// Row-major, `cells[y * width + x]`.
    pub cells: Vec<i8>,
    pub event_count: u32,
}

impl EventFrame {
    pub fn zeros(width: u16, height: u16) -> Self {
        EventFrame {
            t_start: 0,
            window: DEFAULT_WINDOW_US,
            width,
            height,
            cells: vec![0; width as usize * height as usize],
            event_count: 0,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> i8 {
        self.cells[y * self.width as usize + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: i8) {
        let w = self.width as usize;
        self.cells[y * w + x] = v;
    }

    pub fn midpoint(&self) -> u64 {
        self.t_start + self.window / 2
    }

    /// Sum of |cell| over the frame.
    pub fn mass(&self) -> u64 {
        self.cells.iter().map(|&c| (c as i64).unsigned_abs()).sum()
    }
}

#[inline]
fn saturate(v: i32) -> i8 {
    v.clamp(-128, 127) as i8
}

/// Accumulates events into frames over slots `[k*window, (k+1)*window)`.
/// Slots holding fewer than `min_events` events are dropped.
pub fn accumulate_frames(stream: &EventStream, window: u64, min_events: u32) -> Result<Vec<EventFrame>> {
    if window == 0 {
        return Err(Error::InvalidParam("frame window must be positive".into()));
    }
    stream.check()?;
    let (w, h) = (stream.width as usize, stream.height as usize);
    let mut net = vec![0i32; w * h];
    let mut frames = Vec::new();
    let mut slot_events: &[crate::event_io::Event] = &[];
    let mut rest = stream.events.as_slice();
    while !rest.is_empty() {
        let slot = rest[0].t / window;
        let end = rest.partition_point(|e| e.t / window == slot);
        (slot_events, rest) = rest.split_at(end);
        if (slot_events.len() as u64) < min_events as u64 {
            continue;
        }
        for e in slot_events {
            net[e.y as usize * w + e.x as usize] += e.polarity.sign() as i32;
        }
        let cells = net.iter().map(|&v| saturate(v)).collect();
        for e in slot_events {
            net[e.y as usize * w + e.x as usize] = 0;
        }
        frames.push(EventFrame {
            t_start: slot * window,
            window,
            width: stream.width,
            height: stream.height,
            cells,
            event_count: slot_events.len() as u32,
        });
    }
    let _ = slot_events;
    Ok(frames)
}

/// Crop window in sensor coordinates plus the origin all users are aligned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiSpec {
    pub x0: u16,
    pub y0: u16,
    pub width: u16,
    pub height: u16,
    pub reference_origin: (u16, u16),
}

impl RoiSpec {
    pub fn new(x0: u16, y0: u16) -> Self {
        RoiSpec {
            x0,
            y0,
            width: ROI_WIDTH,
            height: ROI_HEIGHT,
            reference_origin: (x0, y0),
        }
    }

    pub fn fits(&self, width: u16, height: u16) -> bool {
        self.x0 as u32 + self.width as u32 <= width as u32
            && self.y0 as u32 + self.height as u32 <= height as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiEstimate {
    pub roi: RoiSpec,
    /// Fraction of trimmed event mass inside the window.
    pub coverage: f64,
}

/// Weighted median of integer positions given a histogram.
fn weighted_median(hist: &[(f64, f64)]) -> f64 {
    let total: f64 = hist.iter().map(|&(_, m)| m).sum();
    let mut acc = 0.0;
    for &(pos, m) in hist {
        acc += m;
        if acc >= total * 0.5 {
            return pos;
        }
    }
    hist.last().map(|&(p, _)| p).unwrap_or(0.0)
}

fn median_and_mad(marginal: &[f64]) -> (f64, f64) {
    let hist: Vec<(f64, f64)> = marginal
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| (i as f64, m))
        .collect();
    let med = weighted_median(&hist);
    let mut dev: Vec<(f64, f64)> = hist.iter().map(|&(p, m)| ((p - med).abs(), m)).collect();
    dev.sort_by(|a, b| a.0.total_cmp(&b.0));
    (med, weighted_median(&dev))
}

/// Places the fixed-size ROI on the trimmed centroid of event mass.
///
/// Mass farther than three median absolute deviations from the per-axis
/// median is discarded before the centroid is taken. The result is rejected
/// when the window holds less than `coverage` of the trimmed mass.
pub fn compute_user_roi(frames: &[EventFrame], coverage: f64) -> Result<RoiEstimate> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Empty("ROI needs at least one frame".into()))?;
    let (w, h) = (first.width as usize, first.height as usize);
    if first.width < ROI_WIDTH || first.height < ROI_HEIGHT {
        return Err(Error::Shape(format!(
            "frame {}x{} smaller than ROI {ROI_WIDTH}x{ROI_HEIGHT}",
            first.width, first.height
        )));
    }
    let mut mass = vec![0f64; w * h];
    for f in frames {
        if (f.width as usize, f.height as usize) != (w, h) {
            return Err(Error::Shape("frames differ in geometry".into()));
        }
        for (m, &c) in mass.iter_mut().zip(&f.cells) {
            *m += (c as f64).abs();
        }
    }
    let mut mx = vec![0f64; w];
    let mut my = vec![0f64; h];
    for y in 0..h {
        for x in 0..w {
            mx[x] += mass[y * w + x];
            my[y] += mass[y * w + x];
        }
    }
    let (medx, madx) = median_and_mad(&mx);
    let (medy, mady) = median_and_mad(&my);
    let keep = |x: usize, y: usize| {
        (x as f64 - medx).abs() <= 3.0 * madx && (y as f64 - medy).abs() <= 3.0 * mady
    };
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let m = mass[y * w + x];
            if m > 0.0 && keep(x, y) {
                sx += m * x as f64;
                sy += m * y as f64;
                total += m;
            }
        }
    }
    let (rw, rh) = (ROI_WIDTH as f64, ROI_HEIGHT as f64);
    let (cx, cy) = if total > 0.0 {
        (sx / total, sy / total)
    } else {
        ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
    };
    // Window center is x0 + (rw-1)/2; round half up keeps integer translations exact.
    let x0 = (cx - (rw - 1.0) / 2.0 + 0.5).floor().clamp(0.0, (w - ROI_WIDTH as usize) as f64);
    let y0 = (cy - (rh - 1.0) / 2.0 + 0.5).floor().clamp(0.0, (h - ROI_HEIGHT as usize) as f64);
    let roi = RoiSpec::new(x0 as u16, y0 as u16);

    let mut inside = 0.0;
    for y in roi.y0 as usize..(roi.y0 + roi.height) as usize {
        for x in roi.x0 as usize..(roi.x0 + roi.width) as usize {
            let m = mass[y * w + x];
            if m > 0.0 && keep(x, y) {
                inside += m;
            }
        }
    }
    let achieved = if total > 0.0 { inside / total } else { 1.0 };
    if achieved < coverage {
        return Err(Error::CoverageUnattainable {
            best: achieved,
            required: coverage,
        });
    }
    Ok(RoiEstimate {
        roi,
        coverage: achieved,
    })
}

/// Crops the ROI out of a sensor-sized frame: output `(i, j)` is input
/// `(roi.x0 + i, roi.y0 + j)`.
pub fn align_and_crop(frame: &EventFrame, roi: &RoiSpec) -> Result<EventFrame> {
    if !roi.fits(frame.width, frame.height) {
        return Err(Error::Shape(format!(
            "ROI at ({}, {}) size {}x{} outside {}x{} frame",
            roi.x0, roi.y0, roi.width, roi.height, frame.width, frame.height
        )));
    }
    let (rw, rh) = (roi.width as usize, roi.height as usize);
    let mut cells = Vec::with_capacity(rw * rh);
    let fw = frame.width as usize;
    for j in 0..rh {
        let start = (roi.y0 as usize + j) * fw + roi.x0 as usize;
        cells.extend_from_slice(&frame.cells[start..start + rw]);
    }
    Ok(EventFrame {
        t_start: frame.t_start,
        window: frame.window,
        width: roi.width,
        height: roi.height,
        cells,
        event_count: frame.event_count,
    })
}

/// Saturating sum-pool over `factor x factor` blocks; trailing partial
/// rows and columns are dropped.
pub fn downsample(frame: &EventFrame, factor: usize) -> Result<EventFrame> {
    if factor == 0 {
        return Err(Error::InvalidParam("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let ow = frame.width as usize / factor;
    let oh = frame.height as usize / factor;
    let mut out = vec![0i8; ow * oh];
    let fw = frame.width as usize;
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = 0i32;
            for dy in 0..factor {
                let row = (oy * factor + dy) * fw + ox * factor;
                for &c in &frame.cells[row..row + factor] {
                    s += c as i32;
                }
            }
            out[oy * ow + ox] = saturate(s);
        }
    }
    Ok(EventFrame {
        t_start: frame.t_start,
        window: frame.window,
        width: ow as u16,
        height: oh as u16,
        cells: out,
        event_count: frame.event_count,
    })
}

/// Column-interleaved multi-channel view of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldedFrame {
    pub t_start: u64,
    pub window: u64,
    pub event_count: u32,
    pub channels: usize,
    /// Per-channel width.
    pub width: usize,
    pub height: usize,
    /// Channel-major: `cells[(c * height + y) * width + x]`.
    pub cells: Vec<i8>,
}

/// Channel `c` holds the columns congruent to `c` modulo `fold`.
pub fn fold_channels(frame: &EventFrame, fold: usize) -> Result<FoldedFrame> {
    let w = frame.width as usize;
    if fold == 0 || w % fold != 0 {
        return Err(Error::InvalidParam(format!(
            "width {w} not divisible by fold {fold}"
        )));
    }
    let (cw, h) = (w / fold, frame.height as usize);
    let mut cells = vec![0i8; w * h];
    for y in 0..h {
        for x in 0..w {
            let (c, xi) = (x % fold, x / fold);
            cells[(c * h + y) * cw + xi] = frame.cells[y * w + x];
        }
    }
    Ok(FoldedFrame {
        t_start: frame.t_start,
        window: frame.window,
        event_count: frame.event_count,
        channels: fold,
        width: cw,
        height: h,
        cells,
    })
}

pub fn unfold_channels(folded: &FoldedFrame) -> EventFrame {
    let (fold, cw, h) = (folded.channels, folded.width, folded.height);
    let w = cw * fold;
    let mut cells = vec![0i8; w * h];
    for c in 0..fold {
        for y in 0..h {
            for xi in 0..cw {
                cells[y * w + xi * fold + c] = folded.cells[(c * h + y) * cw + xi];
            }
        }
    }
    EventFrame {
        t_start: folded.t_start,
        window: folded.window,
        width: w as u16,
        height: h as u16,
        cells,
        event_count: folded.event_count,
    }
}

/// Pupil center in ROI pixel coordinates (before any downsampling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PupilLabel {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// Label coordinates are kept on a `2^-10` pixel lattice so that mirrors
/// and integer shifts are exact in floating point.
pub const LABEL_RESOLUTION: f64 = 1.0 / 1024.0;

fn snap(v: f64) -> f64 {
    (v / LABEL_RESOLUTION).round() * LABEL_RESOLUTION
}

impl PupilLabel {
    /// Snaps the coordinates to [`LABEL_RESOLUTION`].
    pub fn visible(x: f64, y: f64) -> Self {
        PupilLabel {
            x: snap(x),
            y: snap(y),
            visible: true,
        }
    }

    pub fn hidden() -> Self {
        PupilLabel {
            x: 0.0,
            y: 0.0,
            visible: false,
        }
    }

    /// Marks the label hidden when it falls outside a `width x height` frame.
    pub fn bounded(x: f64, y: f64, width: f64, height: f64) -> Self {
        if x >= 0.0 && y >= 0.0 && x < width && y < height {
            PupilLabel::visible(x, y)
        } else {
            PupilLabel::hidden()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub user: u32,
    pub frame: EventFrame,
    pub label: PupilLabel,
}

/// Pairs each frame with the label nearest its midpoint (within half a
/// window), expressed in ROI coordinates.
pub fn attach_labels(frames: &[EventFrame], track: &LabelTrack, roi: &RoiSpec, user: u32) -> Vec<Sample> {
    frames
        .iter()
        .map(|f| {
            let mid = f.midpoint();
            let label = match track.nearest(mid) {
                Some(e) if e.t.abs_diff(mid) <= f.window / 2 && e.visible => PupilLabel::bounded(
                    e.x - roi.x0 as f64,
                    e.y - roi.y0 as f64,
                    roi.width as f64,
                    roi.height as f64,
                ),
                _ => PupilLabel::hidden(),
            };
            Sample {
                user,
                frame: f.clone(),
                label,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_io::{Event, LabelEntry, Polarity};

    fn stream_with(events: Vec<Event>) -> EventStream {
        EventStream::new(346, 260, events).unwrap()
    }

    #[test]
    fn sub_threshold_slot_is_dropped() {
        let ev: Vec<Event> = (0..149).map(|i| Event::new(i * 30, 5, 5, Polarity::On)).collect();
        assert!(accumulate_frames(&stream_with(ev), 5000, 150).unwrap().is_empty());
        let ev: Vec<Event> = (0..150).map(|i| Event::new(i * 30, 5, 5, Polarity::On)).collect();
        let frames = accumulate_frames(&stream_with(ev), 5000, 150).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].at(5, 5), 127);
        assert_eq!(frames[0].event_count, 150);
    }

    #[test]
    fn empty_stream_has_no_frames() {
        assert!(accumulate_frames(&stream_with(vec![]), 5000, 150).unwrap().is_empty());
    }

    #[test]
    fn net_polarity_and_conservation() {
        let mut ev = vec![
            Event::new(10, 7, 3, Polarity::On),
            Event::new(11, 7, 3, Polarity::On),
            Event::new(12, 7, 3, Polarity::Off),
            Event::new(13, 7, 3, Polarity::On),
        ];
        ev.extend((0..10).map(|i| Event::new(20 + i, 1 + i as u16, 1, Polarity::Off)));
        let frames = accumulate_frames(&stream_with(ev.clone()), 5000, 1).unwrap();
        assert_eq!(frames[0].at(7, 3), 2);
        // Sum of raw |pos| + |neg| counts per pixel equals the slot count.
        let mut raw = std::collections::HashMap::<(u16, u16), (u32, u32)>::new();
        for e in &ev {
            let c = raw.entry((e.x, e.y)).or_default();
            if e.polarity == Polarity::On { c.0 += 1 } else { c.1 += 1 }
        }
        let total: u32 = raw.values().map(|(p, n)| p + n).sum();
        assert_eq!(total, frames[0].event_count);
    }

    #[test]
    fn slot_grid_is_exact() {
        let ev: Vec<Event> = (0..4000u64).map(|i| Event::new(i * 5, 1, 1, Polarity::On)).collect();
        let frames = accumulate_frames(&stream_with(ev), 5000, 1).unwrap();
        for (k, f) in frames.iter().enumerate() {
            assert_eq!(f.t_start, k as u64 * 5000);
            assert_eq!(f.event_count, 1000);
        }
    }

    #[test]
    fn crop_identity_and_offset() {
        let mut f = EventFrame::zeros(157, 90);
        f.set(3, 4, 9);
        assert_eq!(align_and_crop(&f, &RoiSpec::new(0, 0)).unwrap(), f);

        let mut s = EventFrame::zeros(346, 260);
        s.set(100, 50, 1);
        let c = align_and_crop(&s, &RoiSpec::new(60, 20)).unwrap();
        let nz: Vec<usize> = (0..c.cells.len()).filter(|&i| c.cells[i] != 0).collect();
        assert_eq!(nz, vec![30 * 157 + 40]);

        let mut far = EventFrame::zeros(346, 260);
        far.set(300, 250, 5);
        assert!(align_and_crop(&far, &RoiSpec::new(0, 0)).unwrap().cells.iter().all(|&c| c == 0));
        assert!(align_and_crop(&far, &RoiSpec::new(200, 0)).is_err());
    }

    #[test]
    fn downsample_sum_pools() {
        let mut f = EventFrame::zeros(4, 2);
        f.set(0, 0, 1);
        f.set(1, 0, 1);
        f.set(0, 1, 1);
        let d = downsample(&f, 2).unwrap();
        assert_eq!((d.width, d.height), (2, 1));
        assert_eq!(d.cells, vec![3, 0]);
        assert_eq!(downsample(&f, 1).unwrap(), f);
        let big = downsample(&EventFrame::zeros(157, 90), 2).unwrap();
        assert_eq!((big.width, big.height), (78, 45));
        let mut sat = EventFrame::zeros(2, 2);
        sat.cells = vec![100, 100, 100, 100];
        assert_eq!(downsample(&sat, 2).unwrap().cells, vec![127]);
    }

    #[test]
    fn fold_round_trip() {
        let mut f = EventFrame::zeros(78, 45);
        for (i, c) in f.cells.iter_mut().enumerate() {
            *c = (i % 251) as i8;
        }
        let folded = fold_channels(&f, 2).unwrap();
        assert_eq!((folded.channels, folded.width, folded.height), (2, 39, 45));
        assert_eq!(folded.cells[39 * 45], f.at(1, 0));
        assert_eq!(unfold_channels(&folded), f);
        assert_eq!(unfold_channels(&fold_channels(&f, 1).unwrap()), f);
        assert!(fold_channels(&f, 4).is_err());
    }

    fn blob_frame(x0: usize, y0: usize) -> EventFrame {
        let mut f = EventFrame::zeros(346, 260);
        // Asymmetric blob so the centroid is not trivially centered.
        for y in 0..60 {
            for x in 0..100 {
                if (x * 7 + y * 3) % 5 != 0 {
                    f.set(x0 + x, y0 + y, if x < 30 { 2 } else { -1 });
                }
            }
        }
        f
    }

    #[test]
    fn roi_is_translation_equivariant() {
        let a = compute_user_roi(&[blob_frame(40, 50)], 0.95).unwrap().roi;
        let b = compute_user_roi(&[blob_frame(57, 31)], 0.95).unwrap().roi;
        assert_eq!(b.x0 as i32 - a.x0 as i32, 17);
        assert_eq!(b.y0 as i32 - a.y0 as i32, -19);
    }

    #[test]
    fn roi_on_filled_region() {
        let mut f = EventFrame::zeros(346, 260);
        for y in 0..90 {
            for x in 0..157 {
                f.set(120 + x, 80 + y, 1);
            }
        }
        let est = compute_user_roi(&[f], 0.95).unwrap();
        assert_eq!((est.roi.x0, est.roi.y0), (120, 80));
        assert!((est.coverage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roi_on_uniform_noise_is_centered() {
        let mut f = EventFrame::zeros(346, 260);
        f.cells.iter_mut().for_each(|c| *c = 1);
        let est = compute_user_roi(&[f.clone()], 0.0).unwrap();
        let cx = est.roi.x0 as f64 + 78.0;
        let cy = est.roi.y0 as f64 + 44.5;
        assert!((cx - 172.5).abs() <= 1.0 && (cy - 129.5).abs() <= 1.0);
        match compute_user_roi(&[f], 0.95) {
            Err(Error::CoverageUnattainable { best, .. }) => assert!(best < 0.2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_nearest_within_half_window() {
        let f = EventFrame { t_start: 10_000, ..EventFrame::zeros(157, 90) };
        let roi = RoiSpec::new(60, 20);
        let track = LabelTrack::new(
            200.0,
            vec![LabelEntry { t: 12_500, x: 100.0, y: 50.0, visible: true }],
        )
        .unwrap();
        let s = attach_labels(&[f.clone()], &track, &roi, 3);
        assert_eq!(s[0].label, PupilLabel::visible(40.0, 30.0));
        assert_eq!(s[0].user, 3);

        let far = LabelTrack::new(
            200.0,
            vec![LabelEntry { t: 15_001, x: 100.0, y: 50.0, visible: true }],
        )
        .unwrap();
        assert!(!attach_labels(&[f.clone()], &far, &roi, 0)[0].label.visible);
        let edge = LabelTrack::new(
            200.0,
            vec![LabelEntry { t: 15_000, x: 100.0, y: 50.0, visible: true }],
        )
        .unwrap();
        assert!(attach_labels(&[f], &edge, &roi, 0)[0].label.visible);
    }
}
