//! The classification head's 24x24 grid, tracking metrics and a label
//! heatmap.
//!
//!     cargo run --release --example grid_metrics

use eetnet::evaluation::{angle_error, block_distance, heatmap, mae, pixel_distance, render_heatmap, DEFAULT_DEG_PER_PX};
use eetnet::framing::{accumulate_frames, align_and_crop, attach_labels, compute_user_roi, PupilLabel, DEFAULT_WINDOW_US};
use eetnet::network::{cell_to_center, label_to_cell, GridSpec, NOT_VISIBLE_CLASS};
use eetnet::pipeline::{synth_user, DataConfig};

fn main() -> eetnet::Result<()> {
    let grid = GridSpec::default();
    println!("cell {:.3} x {:.3} px, {} classes", grid.cell_width(), grid.cell_height(), grid.classes());
    let truth = PupilLabel::visible(80.0, 40.0);
    let pred = PupilLabel::visible(83.0, 44.0);
    let d = pixel_distance(&pred, &truth)?;
    println!("distance {d} px, MAE {} px, {:.2} deg", mae(&pred, &truth)?, angle_error(d, DEFAULT_DEG_PER_PX)?);

    let (tc, pc) = (label_to_cell(truth.x, truth.y, true, &grid)?, label_to_cell(pred.x, pred.y, true, &grid)?);
    println!("cells {tc} and {pc}, block distance {:.3} px", block_distance(pc, tc, &grid)?);
    println!("cell {tc} center {:?}", cell_to_center(tc, &grid)?);
    println!("hidden pupil -> class {}", label_to_cell(0.0, 0.0, false, &grid)?);
    assert_eq!(label_to_cell(0.0, 0.0, false, &grid)?, NOT_VISIBLE_CLASS);

    let data = DataConfig {
        frames_per_user: 600,
        ..DataConfig::default()
    };
    let (stream, track) = synth_user(&data, DEFAULT_WINDOW_US, 15, 4)?;
    let frames = accumulate_frames(&stream, DEFAULT_WINDOW_US, 150)?;
    let roi = compute_user_roi(&frames, 0.0)?.roi;
    let cropped = frames.iter().map(|f| align_and_crop(f, &roi)).collect::<eetnet::Result<Vec<_>>>()?;
    let samples = attach_labels(&cropped, &track, &roi, 15);
    let counts = heatmap(&samples);
    let busiest = counts.iter().enumerate().max_by_key(|c| c.1).map(|c| c.0).unwrap_or(0);
    let w = render_heatmap(&counts).lines().next().map_or(0, |l| l.split(',').count());
    println!(
        "label heatmap over {} samples, busiest pixel ({}, {})",
        samples.len(),
        busiest % w,
        busiest / w
    );
    let mut per_cell = vec![0u32; grid.classes()];
    for s in &samples {
        per_cell[label_to_cell(s.label.x, s.label.y, s.label.visible, &grid)?] += 1;
    }
    let rows = per_cell[..NOT_VISIBLE_CLASS].chunks(NOT_VISIBLE_CLASS.isqrt());
    for row in rows {
        let line: String = row.iter().map(|&c| match c { 0 => '.', 1..=4 => ':', _ => '#' }).collect();
        println!("  {line}");
    }
    Ok(())
}
