//! Quantization-aware fine-tuning under a mixed-precision preset, lowering
//! to an integer model and a check that integer inference reproduces the
//! fake-quantized float path exactly.
//!
//!     cargo run --release --example qat_lowering -- [preset]

use eetnet::framing::{accumulate_frames, align_and_crop, attach_labels, compute_user_roi, Sample, DEFAULT_WINDOW_US};
use eetnet::network::{canonical_spec, train, Head, InputEncoder, TrainConfig};
use eetnet::pipeline::{synth_user, DataConfig};
use eetnet::quantization::{
    fake_quant_trace, int_trace, lower, pack_bits, qat_train, quantize_params, weight_size_bytes, PresetRegistry,
};

fn user_samples(user: u32) -> eetnet::Result<Vec<Sample>> {
    let data = DataConfig {
        frames_per_user: 200,
        ..DataConfig::default()
    };
    let (stream, track) = synth_user(&data, DEFAULT_WINDOW_US, user, 2)?;
    let fr = accumulate_frames(&stream, DEFAULT_WINDOW_US, 150)?;
    let roi = compute_user_roi(&fr, 0.0)?.roi;
    let cropped = fr.iter().map(|f| align_and_crop(f, &roi)).collect::<eetnet::Result<Vec<_>>>()?;
    Ok(attach_labels(&cropped, &track, &roi, user))
}

fn main() -> eetnet::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "EETnetR1248".into());
    let registry = PresetRegistry::default();
    let preset = registry.get(&name)?;
    let spec = canonical_spec(Head::Regression);
    let mut data = user_samples(10)?;
    data.extend(user_samples(19)?);
    let cfg = TrainConfig {
        epochs: 2,
        batch: 32,
        train_users: vec![10],
        val_users: vec![19],
        ..TrainConfig::default()
    };
    let (float, _) = train(&spec, &data, &cfg)?;
    let qcfg = TrainConfig { epochs: 1, lr: 1e-4, ..cfg.clone() };
    let res = qat_train(&spec, float, &data, preset, &qcfg, 32)?;
    println!("{name}: per-layer bits {:?}", res.state.bits);
    println!("activation thresholds {:?}", res.state.thresholds);

    let (q, layer_quant) = quantize_params(&spec, &res.params, &res.state)?;
    let model = lower(&spec, &q, &layer_quant, res.state.input_exponent)?;
    for (i, l) in model.layers.iter().enumerate() {
        println!(
            "  layer {i}: {}-bit weights 2^{}, shift {:>2}, {} packed bytes + {} bias words",
            l.quant.weight_bits,
            l.quant.weight_exponent,
            l.quant.output_shift,
            pack_bits(&l.weights, l.quant.weight_bits).len(),
            l.bias.len()
        );
    }
    println!("weight memory {} bytes", weight_size_bytes(&spec, preset)?.total);

    let encoder = InputEncoder::new(&spec, res.state.input_exponent);
    let mut checked = 0;
    for s in data.iter().take(50) {
        let x = encoder.encode_i8(&s.frame)?;
        assert_eq!(int_trace(&model, &x)?, fake_quant_trace(&model, &q, &x)?);
        checked += 1;
    }
    println!("integer and fake-quantized traces identical on {checked} frames");
    Ok(())
}
