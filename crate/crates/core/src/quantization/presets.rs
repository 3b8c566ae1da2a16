use serde::{Deserialize, Serialize};

use super::check_bits;
use crate::error::{Error, Result};
use crate::network::{Head, LayerSpec, NetworkSpec};

/// Per-layer weight widths, expressed by layer role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantPreset {
    pub name: String,
    pub head: Head,
    pub first_conv: u8,
    pub second_conv: u8,
    pub other_conv: u8,
    pub dense: u8,
}

impl QuantPreset {
    pub fn new(name: &str, head: Head, bits: [u8; 4]) -> Self {
        QuantPreset {
            name: name.to_string(),
            head,
            first_conv: bits[0],
            second_conv: bits[1],
            other_conv: bits[2],
            dense: bits[3],
        }
    }

    pub fn check(&self) -> Result<()> {
        for b in [self.first_conv, self.second_conv, self.other_conv, self.dense] {
            check_bits(b)?;
        }
        Ok(())
    }

    /// Weight width of every parameterized layer of `spec`, in layer order.
    pub fn layer_bits(&self, spec: &NetworkSpec) -> Result<Vec<u8>> {
        self.check()?;
        if spec.head != self.head {
            return Err(Error::Config(format!(
                "preset {} is for the {} head, model has the {} head",
                self.name,
                self.head.name(),
                spec.head.name()
            )));
        }
        let mut conv = 0;
        Ok(spec
            .param_layers()
            .iter()
            .map(|l| match l {
                LayerSpec::Conv3x3 { .. } => {
                    conv += 1;
                    match conv {
                        1 => self.first_conv,
                        2 => self.second_conv,
                        _ => self.other_conv,
                    }
                }
                _ => self.dense,
            })
            .collect())
    }
}

fn builtin() -> Vec<QuantPreset> {
    let mut out = Vec::new();
    for (head, prefix) in [(Head::Regression, "EETnetR"), (Head::Classification, "EETnetC")] {
        for (suffix, bits) in [
            ("4", [4, 4, 4, 8]),
            ("8", [8, 8, 8, 8]),
            ("All4", [4, 4, 4, 4]),
            ("2248", [2, 2, 4, 8]),
            ("1248", [1, 2, 4, 8]),
        ] {
            out.push(QuantPreset::new(&format!("{prefix}{suffix}"), head, bits));
        }
    }
    out
}

/// The ten published configurations plus any user-defined presets.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetRegistry {
    presets: Vec<QuantPreset>,
}

impl Default for PresetRegistry {
    fn default() -> Self {
        PresetRegistry { presets: builtin() }
    }
}

impl PresetRegistry {
    pub fn add(&mut self, preset: QuantPreset) -> Result<()> {
        preset.check()?;
        if self.presets.iter().any(|p| p.name == preset.name) {
            return Err(Error::Config(format!("preset {} already defined", preset.name)));
        }
        self.presets.push(preset);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.presets.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&QuantPreset> {
        self.presets.iter().find(|p| p.name == name).ok_or_else(|| {
            let nearest = self
                .presets
                .iter()
                .map(|p| (strsim::levenshtein(name, &p.name), &p.name))
                .min()
                .map(|(_, n)| n.clone());
            Error::UnknownName {
                kind: "preset",
                name: name.to_string(),
                nearest,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSize {
    pub total: usize,
    pub per_layer: Vec<usize>,
}

/// Storage bytes: per layer `ceil(params * bits / 8)`, biases counted at the
/// layer's weight width.
pub fn weight_size_bytes(spec: &NetworkSpec, preset: &QuantPreset) -> Result<WeightSize> {
    let bits = preset.layer_bits(spec)?;
    let per_layer: Vec<usize> = spec
        .param_layers()
        .iter()
        .zip(&bits)
        .map(|(l, &b)| (l.param_count() * b as usize).div_ceil(8))
        .collect();
    Ok(WeightSize {
        total: per_layer.iter().sum(),
        per_layer,
    })
}
