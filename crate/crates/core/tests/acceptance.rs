//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines print in order.
//! Criteria 4 and 10 share two full `all` runs of `configs/acceptance.toml`
//! through the `eetnet` binary; together they take roughly half an hour on
//! one core.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_force_optimum, chain, lowered_toy, max_gradient_error, random_inputs, small_spec, trained_toy};
use eetnet::augmentation::{augment_dataset, flip, shift, AugmentPlan, FlipMode};
use eetnet::deployment::{
    assign_offsets, estimate, lifetimes, live_peak, macc_count, plan_memory, validate_plan, PlatformProfile,
};
use eetnet::event_io::{Event, EventStream, Polarity};
use eetnet::framing::{accumulate_frames, DEFAULT_MIN_EVENTS, DEFAULT_WINDOW_US};
use eetnet::network::{
    canonical_spec, cell_to_center, label_to_cell, GridSpec, Head, LayerSpec, NetworkSpec, Shape, Target,
    NOT_VISIBLE_CLASS,
};
use eetnet::pipeline::{synth_user, DataConfig};
use eetnet::quantization::{fake_quant_trace, int_trace, weight_size_bytes, PresetRegistry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(detail: String, took: Duration, budget: Duration) -> Outcome {
    ensure(took <= budget, || format!("{detail}; took {took:.1?}, budget {budget:?}"))?;
    Ok(detail)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let spec = canonical_spec(Head::Regression);
    let spec_c = canonical_spec(Head::Classification);
    let reg = PresetRegistry::default();
    let size = |spec: &NetworkSpec, name: &str| -> Result<usize, String> {
        let p = reg.get(name).map_err(|e| e.to_string())?;
        Ok(weight_size_bytes(spec, p).map_err(|e| e.to_string())?.total)
    };
    let all8 = size(&spec, "EETnetR8")?;
    let all4 = size(&spec, "EETnetRAll4")?;
    let r4 = size(&spec, "EETnetR4")?;
    let r2248 = size(&spec, "EETnetR2248")?;
    let r1248 = size(&spec, "EETnetR1248")?;
    let c8 = size(&spec_c, "EETnetC8")?;
    ensure(all8 == 2 * all4, || format!("All8 {all8} != 2 x All4 {all4}"))?;
    ensure(r4 - r2248 == 312, || format!("R4 - R2248 = {}", r4 - r2248))?;
    ensure(r2248 - r1248 == 10, || format!("R2248 - R1248 = {}", r2248 - r1248))?;
    ensure(c8 - all8 == 37_375, || format!("C8 - R8 = {}", c8 - all8))?;
    let rel = (c8 - all8) as f64 / 36_800.0 - 1.0;
    ensure(rel.abs() <= 0.02, || format!("C8 - R8 is {:.2}% from 36.80 kB", rel * 100.0))?;
    within_budget(
        format!(
            "All8/All4 = 2, R4-R2248 = 312, R2248-R1248 = 10, C8-R8 = 37375 B ({:+.2}% vs 36.80 kB)",
            rel * 100.0
        ),
        start.elapsed(),
        Duration::from_secs(1),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let reg = PresetRegistry::default();
    let mut compared = 0usize;
    let mut presets = 0usize;
    for head in [Head::Regression, Head::Classification] {
        let (spec, data, params) = trained_toy(head, 3);
        for name in reg.names() {
            let preset = reg.get(name).map_err(|e| e.to_string())?;
            if preset.head != head {
                continue;
            }
            presets += 1;
            let (model, q) = lowered_toy(&spec, &data, &params, preset);
            for (k, x) in random_inputs(1000, spec.input.len(), 1000 + presets as u64).iter().enumerate() {
                let int = int_trace(&model, x).map_err(|e| format!("{name}: {e}"))?;
                let fq = fake_quant_trace(&model, &q, x).map_err(|e| format!("{name}: {e}"))?;
                ensure(int == fq, || format!("{name}: input {k} differs"))?;
                compared += 1;
            }
        }
    }
    ensure(presets == 10, || format!("only {presets} presets exercised"))?;
    within_budget(
        format!("{compared} inputs over {presets} presets, every activation identical"),
        start.elapsed(),
        Duration::from_secs(60),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..3 {
        worst = worst.max(max_gradient_error(&small_spec(Head::Regression), seed, Target::Point { x: 0.3, y: 0.7 }));
    }
    let cls = NetworkSpec {
        input: Shape::new(2, 4, 6),
        layers: vec![
            LayerSpec::Conv3x3 { in_ch: 2, out_ch: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2x2,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 18, outputs: 7 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 7, outputs: 577 },
        ],
        head: Head::Classification,
    };
    worst = worst.max(max_gradient_error(&cls, 11, Target::Class(42)));
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    within_budget(
        format!("conv, relu, pool, flatten, dense in f64: max relative error {worst:.2e}"),
        start.elapsed(),
        Duration::from_secs(60),
    )
}

/// Artifact tree of one `all` run, keyed by relative path.
type Tree = BTreeMap<String, Vec<u8>>;

fn read_tree(root: &Path) -> Tree {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_all(dir: &Path) -> Result<(Tree, Duration), String> {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance.toml");
    let out_dir: PathBuf = dir.join("run");
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_eetnet"))
        .arg("-c")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("all")
        .output()
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    if !out.status.success() {
        return Err(format!("`all` failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok((read_tree(&out_dir), took))
}

fn mean_distance(tree: &Tree, stem: &str) -> Result<f64, String> {
    let key = format!("eval/{stem}.summary.toml");
    let text = tree.get(&key).ok_or_else(|| format!("missing {key}"))?;
    let table: toml::Table = String::from_utf8_lossy(text).parse().map_err(|e| format!("{key}: {e}"))?;
    table
        .get("mean_pixel_distance_px")
        .and_then(toml::Value::as_float)
        .ok_or_else(|| format!("{key}: no mean_pixel_distance_px"))
}

fn criterion_4(run: &Result<(Tree, Duration), String>) -> Outcome {
    let (tree, took) = run.as_ref().map_err(Clone::clone)?;
    let float = mean_distance(tree, "float")?;
    let r8 = mean_distance(tree, "EETnetR8.integer")?;
    let r4 = mean_distance(tree, "EETnetR4.integer")?;
    let detail = format!("float {float:.2} px, R8 {r8:.2} px, R4 {r4:.2} px (integer inference, held-out users)");
    ensure(r8 <= 6.0, || format!("{detail}; R8 above 6 px"))?;
    ensure((r4 - r8).abs() <= 1.5, || format!("{detail}; R4 more than 1.5 px from R8"))?;
    within_budget(detail, *took, Duration::from_secs(30 * 60))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let slot = |n: usize, t0: u64| -> Vec<Event> {
        (0..n).map(|i| Event::new(t0 + (i as u64 % DEFAULT_WINDOW_US), (i % 40) as u16, 3, Polarity::On)).collect()
    };
    let mut events = slot(149, 0);
    events.extend(slot(150, DEFAULT_WINDOW_US));
    events.sort_by_key(|e| e.t);
    let stream = EventStream::new(40, 10, events).map_err(|e| e.to_string())?;
    let frames = accumulate_frames(&stream, DEFAULT_WINDOW_US, DEFAULT_MIN_EVENTS).map_err(|e| e.to_string())?;
    ensure(frames.len() == 1 && frames[0].t_start == DEFAULT_WINDOW_US, || {
        format!("149/150 slots gave {} frames", frames.len())
    })?;

    let data = DataConfig {
        frames_per_user: 400,
        ..DataConfig::default()
    };
    let (stream, _) = synth_user(&data, DEFAULT_WINDOW_US, 10, 5).map_err(|e| e.to_string())?;
    let frames = accumulate_frames(&stream, DEFAULT_WINDOW_US, DEFAULT_MIN_EVENTS).map_err(|e| e.to_string())?;
    let mut per_slot = BTreeMap::<u64, u32>::new();
    for e in &stream.events {
        *per_slot.entry(e.t / DEFAULT_WINDOW_US).or_default() += 1;
    }
    let kept: u64 = per_slot.values().filter(|&&n| n >= DEFAULT_MIN_EVENTS).map(|&n| n as u64).sum();
    let framed: u64 = frames.iter().map(|f| f.event_count as u64).sum();
    ensure(kept == framed, || format!("{framed} events framed, {kept} in kept slots"))?;
    ensure(frames.iter().all(|f| f.t_start % DEFAULT_WINDOW_US == 0 && f.window == DEFAULT_WINDOW_US), || {
        "frame off the 5 ms grid".into()
    })?;
    let span_s = (frames.last().unwrap().t_start - frames[0].t_start + DEFAULT_WINDOW_US) as f64 / 1e6;
    let rate = frames.len() as f64 / span_s;
    ensure((rate - 200.0).abs() < 1e-9, || format!("frame rate {rate:.3} Hz with dropped slots"))?;
    within_budget(
        format!("149 -> no frame, 150 -> frame; {framed} events conserved; {} frames at {rate} Hz", frames.len()),
        start.elapsed(),
        Duration::from_secs(10),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let samples = common::toy_dataset(1000, &[1], 606);
    let out = augment_dataset(&samples, &AugmentPlan::new(9));
    ensure(out.len() == 8 * samples.len(), || format!("{} from {}", out.len(), samples.len()))?;
    for (i, s) in samples.iter().enumerate() {
        for mode in [FlipMode::Vertical, FlipMode::Horizontal, FlipMode::Both] {
            ensure(flip(&flip(s, mode), mode) == *s, || format!("sample {i}: {mode:?} twice is not identity"))?;
        }
        ensure(
            flip(&flip(s, FlipMode::Vertical), FlipMode::Horizontal) == flip(s, FlipMode::Both),
            || format!("sample {i}: vflip then hflip differs from vhflip"),
        )?;
        let group = &out[8 * i..8 * i + 8];
        let bases = [
            s.clone(),
            flip(s, FlipMode::Vertical),
            flip(s, FlipMode::Horizontal),
            flip(s, FlipMode::Both),
        ];
        for (k, base) in bases.iter().enumerate() {
            ensure(group[2 * k] == *base, || format!("sample {i}: variant {k} is not the flipped frame"))?;
            let shifted = &group[2 * k + 1];
            ensure(shifted.frame.mass() <= base.frame.mass(), || format!("sample {i}: shift added mass"))?;
            if shifted.label.visible {
                let dx = (shifted.label.x - base.label.x) as i32;
                let dy = (shifted.label.y - base.label.y) as i32;
                ensure(shift(base, dx, dy) == *shifted, || format!("sample {i}: frame and label shifts disagree"))?;
            }
        }
        // The event under the label moves with the label.
        let (x, y) = (s.label.x.round() as usize, s.label.y.round() as usize);
        let (w, h) = (s.frame.width as usize, s.frame.height as usize);
        if x < w && y < h {
            ensure(bases[2].frame.at(w - 1 - x, y) == s.frame.at(x, y), || format!("sample {i}: hflip pixel"))?;
            ensure(bases[1].frame.at(x, h - 1 - y) == s.frame.at(x, y), || format!("sample {i}: vflip pixel"))?;
        }
    }
    within_budget(
        format!("{} -> {} samples; involutions, commuting flips and label/frame shifts agree", samples.len(), out.len()),
        start.elapsed(),
        Duration::from_secs(10),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut short = 0usize;
    for n in 0..10_000 {
        let len = rng.random_range(1..=30);
        let sizes: Vec<usize> = (0..len).map(|_| rng.random_range(0..100_000)).collect();
        let b = chain(&sizes);
        let (offsets, peak) = assign_offsets(&b).map_err(|e| format!("chain {n}: {e}"))?;
        validate_plan(&b, &offsets).map_err(|e| format!("chain {n}: {e}"))?;
        ensure(peak == live_peak(&b).0, || format!("chain {n}: peak above the live bound"))?;
    }
    for n in 0..2_000 {
        let len = rng.random_range(1..=5);
        let sizes: Vec<usize> = (0..len).map(|_| rng.random_range(1..1_000)).collect();
        let b = chain(&sizes);
        let (_, peak) = assign_offsets(&b).map_err(|e| e.to_string())?;
        let best = brute_force_optimum(&b);
        ensure(peak == best, || format!("short chain {n} {sizes:?}: {peak} vs optimum {best}"))?;
        short += 1;
    }
    let spec = canonical_spec(Head::Regression);
    let buffers = lifetimes(&spec).map_err(|e| e.to_string())?;
    let naive: usize = buffers.iter().map(|b| b.size_bytes).sum();
    let profile = PlatformProfile::builtin("max78000-like").map_err(|e| e.to_string())?;
    let plan = plan_memory(&spec, &profile).map_err(|e| e.to_string())?;
    ensure(plan.peak_bytes < naive, || format!("canonical peak {} >= naive {naive}", plan.peak_bytes))?;
    within_budget(
        format!(
            "10000 fuzzed chains without overlap; {short} short chains at the brute-force optimum; canonical peak {} B < naive {naive} B",
            plan.peak_bytes
        ),
        start.elapsed(),
        Duration::from_secs(60),
    )
}

fn criterion_8() -> Outcome {
    let spec = canonical_spec(Head::Regression);
    let maccs = macc_count(&spec).map_err(|e| e.to_string())?;
    let conv1 = maccs.per_layer.first().map(|&(_, m)| m).unwrap_or(0);
    ensure(conv1 == 252_720, || format!("conv1 MACCs {conv1}"))?;
    let reg = PresetRegistry::default();
    let profile = PlatformProfile::builtin("max78000-like").map_err(|e| e.to_string())?;
    let est = estimate(&spec, reg.get("EETnetR8").map_err(|e| e.to_string())?, &profile).map_err(|e| e.to_string())?;
    let rel = est.latency_ms / 3.0 - 1.0;
    ensure(rel.abs() <= 0.10, || format!("R8 estimate {:.3} ms", est.latency_ms))?;
    Ok(format!(
        "conv1 = 252720 MACCs; R8 input+inference estimate {:.3} ms ({:+.2}% vs 3.0 ms), a model not a measurement",
        est.latency_ms,
        rel * 100.0
    ))
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let grid = GridSpec::default();
    for cell in 0..NOT_VISIBLE_CLASS {
        let (x, y) = cell_to_center(cell, &grid).map_err(|e| e.to_string())?.ok_or("visible cell has no center")?;
        let back = label_to_cell(x, y, true, &grid).map_err(|e| e.to_string())?;
        ensure(back == cell, || format!("cell {cell} -> ({x}, {y}) -> {back}"))?;
    }
    ensure(NOT_VISIBLE_CLASS == 576, || "not-visible class is not 576".into())?;
    ensure(label_to_cell(10.0, 10.0, false, &grid).map_err(|e| e.to_string())? == 576, || {
        "hidden label not mapped to 576".into()
    })?;
    ensure(cell_to_center(576, &grid).map_err(|e| e.to_string())?.is_none(), || "class 576 has a center".into())?;
    within_budget(
        "576 cells round-trip; class 576 is not-visible".into(),
        start.elapsed(),
        Duration::from_secs(1),
    )
}

fn criterion_10(a: &Result<(Tree, Duration), String>, b: &Result<(Tree, Duration), String>) -> Outcome {
    let (ta, da) = a.as_ref().map_err(Clone::clone)?;
    let (tb, db) = b.as_ref().map_err(Clone::clone)?;
    ensure(ta.keys().eq(tb.keys()), || "runs wrote different artifact sets".into())?;
    let differing: Vec<&String> = ta.iter().filter(|(k, v)| tb[*k] != **v).map(|(k, _)| k).collect();
    ensure(differing.is_empty(), || format!("differing artifacts: {differing:?}"))?;
    let bytes: usize = ta.values().map(Vec::len).sum();
    Ok(format!("{} artifacts ({bytes} bytes) byte-identical across two runs ({da:.0?} + {db:.0?})", ta.len()))
}

fn main() {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |n: u8, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("criterion {n:>2} {name}: PASS ({d})"),
            Err(d) => println!("criterion {n:>2} {name}: FAIL ({d})"),
        }
        results.push((n, name, outcome));
    };
    report(1, "quantization size arithmetic", criterion_1());
    report(2, "bit-exact lowering", criterion_2());
    report(3, "gradient correctness", criterion_3());
    let dir_a = tempfile::tempdir().expect("temp dir");
    let dir_b = tempfile::tempdir().expect("temp dir");
    let run_a = run_all(dir_a.path());
    report(4, "end-to-end desk-scale tracking", criterion_4(&run_a));
    report(5, "framing", criterion_5());
    report(6, "augmentation", criterion_6());
    report(7, "memory planner", criterion_7());
    report(8, "cost model", criterion_8());
    report(9, "grid head", criterion_9());
    let run_b = run_all(dir_b.path());
    report(10, "determinism", criterion_10(&run_a, &run_b));
    let failed: Vec<u8> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
