//! Buffer lifetimes, activation offsets and processor assignment for the
//! canonical network, plus the model description a deployment tool reads.
//!
//!     cargo run --release --example memory_plan

use eetnet::deployment::{lifetimes, plan_memory, PlatformProfile};
use eetnet::network::{canonical_spec, Head};

fn main() -> eetnet::Result<()> {
    let spec = canonical_spec(Head::Regression);
    let profile = PlatformProfile::builtin("max78000-like")?;
    let buffers = lifetimes(&spec)?;
    let plan = plan_memory(&spec, &profile)?;
    println!("{:<6} {:<14} {:>8} {:>6} {:>6} {:>8}", "buffer", "layer", "bytes", "birth", "last", "offset");
    for (i, (b, off)) in buffers.iter().zip(&plan.offsets).enumerate() {
        let layer = b.layer.map_or("input".to_string(), |l| format!("{} {}", l, spec.layers[l].name()));
        println!("{i:<6} {layer:<14} {:>8} {:>6} {:>6} {off:>8}", b.size_bytes, b.birth, b.last_use);
    }
    let naive: usize = buffers.iter().map(|b| b.size_bytes).sum();
    println!("peak {} bytes (naive {naive}), {} available", plan.peak_bytes, profile.data_memory_bytes);
    for (k, p) in plan.processors.iter().enumerate() {
        println!("step {:>2}: processors {}-{}", k + 1, p.start, p.end - 1);
    }

    let serial = PlatformProfile::builtin("mcu-serial-like")?;
    match plan_memory(&spec, &serial) {
        Ok(p) => println!("{}: peak {} bytes", serial.name, p.peak_bytes),
        Err(e) => println!("{}: {e}", serial.name),
    }
    Ok(())
}
