//! Accumulate 5 ms event frames, place the user's 157x90 ROI and attach
//! labels in ROI coordinates.
//!
//!     cargo run --release --example frame_stream

use eetnet::framing::{
    accumulate_frames, align_and_crop, attach_labels, compute_user_roi, DEFAULT_MIN_EVENTS, DEFAULT_WINDOW_US,
};
use eetnet::pipeline::{synth_user, DataConfig};

fn main() -> eetnet::Result<()> {
    let data = DataConfig {
        frames_per_user: 300,
        ..DataConfig::default()
    };
    let (stream, track) = synth_user(&data, DEFAULT_WINDOW_US, 18, 7)?;
    let frames = accumulate_frames(&stream, DEFAULT_WINDOW_US, DEFAULT_MIN_EVENTS)?;
    let slots = stream.end_time() / DEFAULT_WINDOW_US + 1;
    println!("{} of {slots} slots reached {DEFAULT_MIN_EVENTS} events", frames.len());

    let est = compute_user_roi(&frames, 0.9)?;
    let roi = est.roi;
    println!(
        "ROI {}x{} at ({}, {}), {:.1}% of trimmed event mass inside",
        roi.width,
        roi.height,
        roi.x0,
        roi.y0,
        est.coverage * 100.0
    );

    let cropped = frames.iter().map(|f| align_and_crop(f, &roi)).collect::<eetnet::Result<Vec<_>>>()?;
    let samples = attach_labels(&cropped, &track, &roi, 18);
    let visible = samples.iter().filter(|s| s.label.visible).count();
    println!("{} samples, {visible} with a visible pupil", samples.len());
    if let Some(s) = samples.iter().find(|s| s.label.visible) {
        println!(
            "first: t = {} us, {} events, mass {}, pupil at ({:.1}, {:.1})",
            s.frame.t_start,
            s.frame.event_count,
            s.frame.mass(),
            s.label.x,
            s.label.y
        );
    }
    Ok(())
}
