//! Drives the `eetnet` binary end to end on a tiny configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 11
out_dir = "run"
[data]
frames_per_user = 40
[train]
epochs = 1
batch = 16
[qat]
epochs = 1
batch = 16
calib_size = 8
[eval]
modes = ["integer", "float-fakequant"]
"#;

fn eetnet(args: &[&str], cfg: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eetnet"))
        .arg("-q")
        .arg("-c")
        .arg(cfg)
        .args(args)
        .output()
        .unwrap()
}

fn tiny(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    cfg
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
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

/// The calibrated accelerator profile with 4 KiB of data memory.
fn small_profile(dir: &Path) -> std::path::PathBuf {
    let builtin = eetnet::deployment::BUILTIN_PROFILES
        .iter()
        .find(|(n, _)| *n == "max78000-like")
        .unwrap()
        .1;
    let small: Vec<&str> = builtin
        .lines()
        .map(|l| if l.starts_with("data_memory_bytes") { "data_memory_bytes = 4096" } else { l })
        .collect();
    let path = dir.join("small.toml");
    std::fs::write(&path, small.join("\n")).unwrap();
    path
}

fn summary_without_mode(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("mode =")).collect::<Vec<_>>().join("\n")
}

#[test]
fn all_is_deterministic_and_quantized_modes_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = eetnet(&["all"], &tiny(d));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (tree(&a.path().join("run")), tree(&b.path().join("run")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{k} differs between runs");
    }
    for stage in ["synth", "frame", "train", "qat", "quantize", "eval", "export", "estimate"] {
        assert!(ta.contains_key(&format!("provenance/{stage}.toml")), "no provenance for {stage}");
    }
    for preset in ["EETnetR8", "EETnetR4"] {
        let int = String::from_utf8(ta[&format!("eval/{preset}.integer.summary.toml")].clone()).unwrap();
        let fq = String::from_utf8(ta[&format!("eval/{preset}.float-fakequant.summary.toml")].clone()).unwrap();
        assert_eq!(summary_without_mode(&int), summary_without_mode(&fq));
    }
    assert!(ta.contains_key("deploy/EETnetR8.description.toml"));

    let profile = small_profile(a.path());
    let out = eetnet(&["--profile", profile.to_str().unwrap(), "plan"], &tiny(a.path()));
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[capacity]: capacity exceeded at step"), "{err}");
}

#[test]
fn input_only_estimate_prints_the_input_load() {
    let d = tempfile::tempdir().unwrap();
    let out = eetnet(&["estimate", "--input-only"], &tiny(d.path()));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("latency_ms = 0.2270"), "{text}");
}

#[test]
fn errors_map_to_classes_and_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = tiny(d.path());

    let out = eetnet(&["--preset", "EETnetR3", "estimate"], &cfg);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[config]: "), "{err}");
    assert!(err.contains("EETnetR4") || err.contains("EETnetR8"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let out = eetnet(&["frame"], &cfg);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error[data]: "));

    let profile = small_profile(d.path());
    let out = eetnet(&["--profile", profile.to_str().unwrap(), "estimate"], &cfg);
    assert!(out.status.success(), "estimate reports, it does not plan");
    assert!(String::from_utf8(out.stdout).unwrap().contains("fits = false"));

    let bad = d.path().join("bad.toml");
    std::fs::write(&bad, "sed = 1\n").unwrap();
    let out = eetnet(&["presets"], &bad);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preset_list_has_the_ten_builtins() {
    let d = tempfile::tempdir().unwrap();
    let out = eetnet(&["presets"], &tiny(d.path()));
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().collect();
    assert_eq!(names.len(), 10);
    assert!(names.contains(&"EETnetC1248"));
}
