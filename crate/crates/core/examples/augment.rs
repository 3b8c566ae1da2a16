//! Expand a labeled set eightfold: four flip variants, each unshifted and
//! randomly shifted, with labels transformed alongside the frames.
//!
//!     cargo run --release --example augment

use eetnet::augmentation::{augment_dataset, AugmentPlan, FLIP_VARIANTS};
use eetnet::framing::{accumulate_frames, align_and_crop, attach_labels, compute_user_roi, DEFAULT_WINDOW_US};
use eetnet::pipeline::{synth_user, DataConfig};

fn main() -> eetnet::Result<()> {
    let data = DataConfig {
        frames_per_user: 50,
        ..DataConfig::default()
    };
    let (stream, track) = synth_user(&data, DEFAULT_WINDOW_US, 20, 3)?;
    let frames = accumulate_frames(&stream, DEFAULT_WINDOW_US, 150)?;
    let roi = compute_user_roi(&frames, 0.0)?.roi;
    let cropped = frames.iter().map(|f| align_and_crop(f, &roi)).collect::<eetnet::Result<Vec<_>>>()?;
    let samples = attach_labels(&cropped, &track, &roi, 20);

    let out = augment_dataset(&samples, &AugmentPlan::new(99));
    println!("{} samples -> {}", samples.len(), out.len());
    for (k, s) in out.iter().take(8).enumerate() {
        let flip = FLIP_VARIANTS[k / 2].map_or("none".to_string(), |m| format!("{m:?}"));
        let kind = if k % 2 == 0 { "unshifted" } else { "shifted" };
        let label = if s.label.visible {
            format!("({:.1}, {:.1})", s.label.x, s.label.y)
        } else {
            "hidden".to_string()
        };
        println!("  flip {flip:<10} {kind:<9} mass {:>4}  label {label}", s.frame.mass());
    }
    Ok(())
}
