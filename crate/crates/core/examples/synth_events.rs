//! Synthesize one user's eye event stream, validate it and write it in both
//! file formats.
//!
//!     cargo run --release --example synth_events -- [out_dir]

use std::path::PathBuf;

use eetnet::event_io::{
    read_events, validate_stream, write_events, write_labels, EventFormat, SENSOR_HEIGHT, SENSOR_WIDTH,
};
use eetnet::framing::DEFAULT_WINDOW_US;
use eetnet::pipeline::{synth_user, DataConfig};

fn main() -> eetnet::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let data = DataConfig {
        frames_per_user: 400,
        ..DataConfig::default()
    };
    let (stream, track) = synth_user(&data, DEFAULT_WINDOW_US, 10, 42)?;
    let report = validate_stream(&stream);
    let on = stream.events.iter().filter(|e| e.polarity.sign() > 0).count();
    println!("{} events over {:.2} s, {} ON / {} OFF", stream.len(), stream.end_time() as f64 / 1e6, on, stream.len() - on);
    println!("valid: {}, peak rate {} events/ms", report.is_valid(), report.rate_histogram.iter().max().unwrap_or(&0));
    println!("{} labels at {} Hz", track.entries.len(), track.rate_hz);

    let bin = out.join("user_10.evt");
    let csv = out.join("user_10.csv");
    write_events(&stream, &bin, EventFormat::Binary)?;
    write_events(&stream, &csv, EventFormat::Csv { width: SENSOR_WIDTH, height: SENSOR_HEIGHT })?;
    write_labels(&track, &out.join("user_10.labels.csv"))?;
    let back = read_events(&csv, EventFormat::from_path(&csv, SENSOR_WIDTH, SENSOR_HEIGHT))?;
    assert_eq!(back, stream);
    println!("wrote {} and {}", bin.display(), csv.display());
    Ok(())
}
