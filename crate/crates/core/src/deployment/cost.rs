use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assign_offsets, lifetimes};
use crate::error::{Error, Result};
use crate::network::{LayerSpec, NetworkSpec};
use crate::quantization::{weight_size_bytes, QuantPreset};

/// Profiles shipped in the repository's `profiles/` directory.
pub const BUILTIN_PROFILES: [(&str, &str); 2] = [
    ("max78000-like", include_str!("../../../../profiles/max78000-like.toml")),
    ("mcu-serial-like", include_str!("../../../../profiles/mcu-serial-like.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformProfile {
    pub name: String,
    pub processor_count: usize,
    pub data_memory_bytes: usize,
    pub weight_memory_bytes: usize,
    /// Effective; below 1 for targets that run many MACCs per cycle.
    pub cycles_per_macc: f64,
    pub clock_hz: f64,
    pub active_power_mw: f64,
    pub idle_power_mw: f64,
    pub input_load_ms: f64,
    pub input_load_energy_uj: f64,
}

impl PlatformProfile {
    pub fn parse(text: &str) -> Result<Self> {
        let p: PlatformProfile =
            toml::from_str(text).map_err(|e| Error::Config(format!("platform profile: {e}")))?;
        p.check()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match BUILTIN_PROFILES.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::parse(text),
            None => Err(Error::UnknownName {
                kind: "profile",
                name: name.to_string(),
                nearest: BUILTIN_PROFILES
                    .iter()
                    .map(|(n, _)| (strsim::levenshtein(name, n), n.to_string()))
                    .min()
                    .map(|(_, n)| n),
            }),
        }
    }

    /// A file path if `name` names an existing file, else a built-in profile.
    pub fn resolve(name: &str) -> Result<Self> {
        let path = Path::new(name);
        if path.is_file() {
            Self::load(path)
        } else {
            Self::builtin(name)
        }
    }

    pub fn check(&self) -> Result<()> {
        let positive = [
            ("cycles_per_macc", self.cycles_per_macc),
            ("clock_hz", self.clock_hz),
            ("active_power_mw", self.active_power_mw),
            ("idle_power_mw", self.idle_power_mw),
            ("input_load_ms", self.input_load_ms),
            ("input_load_energy_uj", self.input_load_energy_uj),
        ];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("profile {}: {what} must be positive", self.name)));
            }
        }
        if self.processor_count == 0 || self.data_memory_bytes == 0 || self.weight_memory_bytes == 0 {
            return Err(Error::Config(format!(
                "profile {}: processor and memory sizes must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaccCount {
    /// `(layer index, maccs)` for every layer.
    pub per_layer: Vec<(usize, u64)>,
    pub total: u64,
}

/// Conv: out_h * out_w * out_c * in_c * 9; dense: in * out; others 0.
pub fn macc_count(spec: &NetworkSpec) -> Result<MaccCount> {
    let shapes = spec.shapes()?;
    let per_layer: Vec<(usize, u64)> = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let n = match *l {
                LayerSpec::Conv3x3 { in_ch, out_ch } => {
                    let o = shapes[i];
                    o.h * o.w * out_ch * in_ch * 9
                }
                LayerSpec::Dense { inputs, outputs } => inputs * outputs,
                _ => 0,
            };
            (i, n as u64)
        })
        .collect();
    let total = per_layer.iter().map(|x| x.1).sum();
    Ok(MaccCount { per_layer, total })
}

/// Model estimate, not a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub profile: String,
    pub maccs: u64,
    pub compute_ms: f64,
    pub latency_ms: f64,
    pub energy_uj: f64,
    pub weight_bytes: usize,
    pub peak_bytes: usize,
    pub fits: bool,
}

impl Estimate {
    pub fn render(&self) -> String {
        format!(
            "# MODEL ESTIMATE (not a measurement)\n\
             profile = \"{}\"\nmaccs = {}\ncompute_ms = {:.4}\nlatency_ms = {:.4}\n\
             energy_uj = {:.3}\nweight_bytes = {}\npeak_bytes = {}\nfits = {}\n",
            self.profile,
            self.maccs,
            self.compute_ms,
            self.latency_ms,
            self.energy_uj,
            self.weight_bytes,
            self.peak_bytes,
            self.fits
        )
    }
}

/// Latency is the input load plus `maccs * cycles_per_macc / clock`; energy
/// is the input load energy plus active power over the compute time.
pub fn estimate(spec: &NetworkSpec, preset: &QuantPreset, profile: &PlatformProfile) -> Result<Estimate> {
    profile.check()?;
    let maccs = macc_count(spec)?.total;
    let compute_ms = maccs as f64 * profile.cycles_per_macc / profile.clock_hz * 1000.0;
    let weight_bytes = weight_size_bytes(spec, preset)?.total;
    let (_, peak_bytes) = assign_offsets(&lifetimes(spec)?)?;
    Ok(Estimate {
        profile: profile.name.clone(),
        maccs,
        compute_ms,
        latency_ms: profile.input_load_ms + compute_ms,
        energy_uj: profile.input_load_energy_uj + profile.active_power_mw * compute_ms,
        weight_bytes,
        peak_bytes,
        fits: weight_bytes <= profile.weight_memory_bytes && peak_bytes <= profile.data_memory_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{canonical_spec, Head, Shape};
    use crate::quantization::PresetRegistry;

    #[test]
    fn builtin_profiles_parse() {
        for (name, _) in BUILTIN_PROFILES {
            assert_eq!(PlatformProfile::builtin(name).unwrap().name, name);
        }
        assert!(matches!(
            PlatformProfile::builtin("max78000"),
            Err(Error::UnknownName { nearest: Some(_), .. })
        ));
    }

    #[test]
    fn canonical_maccs() {
        let m = macc_count(&canonical_spec(Head::Regression)).unwrap();
        assert_eq!(m.per_layer[0].1, 78 * 45 * 8 * 9);
        let expected = [252_720u64, 4_043_520, 3_953_664, 7_907_328, 3_852_288, 7_704_576, 184_320, 128];
        let got: Vec<u64> = m.per_layer.iter().map(|x| x.1).filter(|&n| n > 0).collect();
        assert_eq!(got, expected);
        assert_eq!(m.total, expected.iter().sum::<u64>());
        let dense = NetworkSpec {
            input: Shape::flat(512),
            layers: vec![LayerSpec::Dense { inputs: 512, outputs: 2 }],
            head: Head::Regression,
        };
        assert_eq!(macc_count(&dense).unwrap().total, 1024);
    }

    #[test]
    fn zero_layer_latency_is_input_load() {
        let spec = NetworkSpec { input: Shape::new(1, 45, 78), layers: vec![], head: Head::Regression };
        let reg = PresetRegistry::default();
        let e = estimate(&spec, reg.get("EETnetR8").unwrap(), &PlatformProfile::builtin("max78000-like").unwrap())
            .unwrap();
        assert_eq!(e.latency_ms, 0.227);
        assert_eq!(e.energy_uj, 2.0);
    }

    #[test]
    fn calibrated_r8_latency() {
        let reg = PresetRegistry::default();
        let mut p = PlatformProfile::builtin("max78000-like").unwrap();
        let spec = canonical_spec(Head::Regression);
        let e = estimate(&spec, reg.get("EETnetR8").unwrap(), &p).unwrap();
        assert!((e.latency_ms - 3.0).abs() < 0.3, "{}", e.latency_ms);
        assert!(e.fits);
        p.cycles_per_macc /= 2.0;
        let half = estimate(&spec, reg.get("EETnetR8").unwrap(), &p).unwrap();
        assert_eq!(half.compute_ms * 2.0, e.compute_ms);
    }
}
