//! Every stage through the config-driven pipeline on a small run:
//! synthesize, frame, augment, train, QAT, quantize, evaluate, plan, export
//! and estimate.
//!
//!     cargo run --release --example full_pipeline -- [out_dir]

use eetnet::pipeline::{Command, Pipeline, PipelineConfig};

fn main() -> eetnet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("eetnet-example"));
    let mut cfg = PipelineConfig::parse(
        r#"
        seed = 5
        [data]
        frames_per_user = 60
        [train]
        epochs = 2
        batch = 32
        [qat]
        presets = ["EETnetR8", "EETnetR2248"]
        epochs = 1
        [eval]
        modes = ["integer", "float-fakequant"]
        "#,
    )?;
    cfg.out_dir = out;
    cfg.deploy.preset = "EETnetR2248".into();
    let mut pipeline = Pipeline::new(cfg);
    let written = pipeline.run(Command::All)?;
    println!("{} artifacts under {}", written.len(), pipeline.cfg.out_dir.display());
    for p in written.iter().filter(|p| p.extension().is_some_and(|e| e == "toml")) {
        println!("  {}", p.display());
    }
    Ok(())
}
