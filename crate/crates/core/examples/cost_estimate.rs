//! Weight memory, MACCs, and modeled latency and energy for every preset on
//! both built-in platform profiles. Estimates are a model, not measurements.
//!
//!     cargo run --release --example cost_estimate

use eetnet::deployment::{estimate, macc_count, PlatformProfile, BUILTIN_PROFILES};
use eetnet::network::{canonical_spec, Head};
use eetnet::quantization::{weight_size_bytes, PresetRegistry};

fn main() -> eetnet::Result<()> {
    let registry = PresetRegistry::default();
    let maccs = macc_count(&canonical_spec(Head::Regression))?;
    println!("regression MACCs: {}", maccs.total);
    for (layer, m) in &maccs.per_layer {
        println!("  layer {layer:>2}: {m}");
    }
    for (profile_name, _) in BUILTIN_PROFILES {
        let profile = PlatformProfile::builtin(profile_name)?;
        println!("\n{profile_name}");
        println!("  {:<13} {:>9} {:>10} {:>10} {:>5}", "preset", "weight B", "latency ms", "energy uJ", "fits");
        for name in registry.names() {
            let preset = registry.get(name)?;
            let spec = canonical_spec(preset.head);
            let est = estimate(&spec, preset, &profile)?;
            let size = weight_size_bytes(&spec, preset)?;
            println!(
                "  {name:<13} {:>9} {:>10.3} {:>10.2} {:>5}",
                size.total, est.latency_ms, est.energy_uj, est.fits
            );
        }
    }
    Ok(())
}
