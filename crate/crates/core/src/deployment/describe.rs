//! The model description file: TOML-compatible `key = value` lines in a
//! fixed order, one `layer.N.*` group per executable step.

use std::fmt::Write as _;
use std::path::Path;

use super::{executable_steps, lifetimes, MemoryPlan};
use crate::error::{Error, Result};
use crate::network::LayerSpec;
use crate::quantization::IntegerModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerQuantInfo {
    pub weight_bits: u8,
    pub weight_exponent: i32,
    pub output_shift: i32,
    /// Byte range of packed weights then i32 biases in weight memory.
    pub weight_bytes: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescribedLayer {
    pub kind: String,
    /// Index of the layer in the network spec.
    pub source: usize,
    pub input: [usize; 3],
    pub output: [usize; 3],
    pub relu: bool,
    pub quant: Option<LayerQuantInfo>,
    pub output_offset: usize,
    pub output_bytes: usize,
    /// First processor and count.
    pub processors: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDescription {
    pub head: String,
    pub input: [usize; 3],
    pub input_exponent: i32,
    pub input_offset: usize,
    pub layers: Vec<DescribedLayer>,
    pub peak_bytes: usize,
}

fn dims(s: crate::network::Shape) -> [usize; 3] {
    [s.c, s.h, s.w]
}

pub fn describe(model: &IntegerModel, plan: &MemoryPlan) -> Result<ModelDescription> {
    let spec = &model.spec;
    let shapes = spec.shapes()?;
    let buffers = lifetimes(spec)?;
    let steps = executable_steps(spec);
    if plan.offsets.len() != buffers.len() || plan.processors.len() != steps.len() {
        return Err(Error::Invariant("memory plan does not match the model".into()));
    }
    let param_idx = spec.param_layer_indices();
    let mut weight_at = 0;
    let mut layers = Vec::with_capacity(steps.len());
    for (k, s) in steps.iter().enumerate() {
        let layer = spec.layers[s.layer];
        let quant = param_idx.iter().position(|&i| i == s.layer).map(|j| {
            let l = &model.layers[j];
            let n = (l.weights.len() * l.quant.weight_bits as usize).div_ceil(8) + 4 * l.bias.len();
            let range = (weight_at, weight_at + n);
            weight_at += n;
            LayerQuantInfo {
                weight_bits: l.quant.weight_bits,
                weight_exponent: l.quant.weight_exponent,
                output_shift: l.quant.output_shift,
                weight_bytes: range,
            }
        });
        let input = if s.layer == 0 { spec.input } else { shapes[s.layer - 1] };
        layers.push(DescribedLayer {
            kind: layer.name().to_string(),
            source: s.layer,
            input: dims(input),
            output: dims(shapes[s.output_layer]),
            relu: s.output_layer != s.layer || layer == LayerSpec::Relu,
            quant,
            output_offset: plan.offsets[k + 1],
            output_bytes: buffers[k + 1].size_bytes,
            processors: (plan.processors[k].start, plan.processors[k].len()),
        });
    }
    Ok(ModelDescription {
        head: spec.head.name().to_string(),
        input: dims(spec.input),
        input_exponent: model.input_exponent,
        input_offset: plan.offsets[0],
        layers,
        peak_bytes: plan.peak_bytes,
    })
}

fn list(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(", "))
}

impl ModelDescription {
    pub fn render(&self) -> String {
        let mut o = String::from("# EETnet model description\n");
        let _ = writeln!(o, "model.head = \"{}\"", self.head);
        let _ = writeln!(o, "model.input = {}", list(&self.input));
        let _ = writeln!(o, "model.input_exponent = {}", self.input_exponent);
        let _ = writeln!(o, "model.input_offset = {}", self.input_offset);
        let _ = writeln!(o, "model.layer_count = {}", self.layers.len());
        for (n, l) in self.layers.iter().enumerate() {
            let _ = writeln!(o, "layer.{n}.kind = \"{}\"", l.kind);
            let _ = writeln!(o, "layer.{n}.source = {}", l.source);
            let _ = writeln!(o, "layer.{n}.input = {}", list(&l.input));
            let _ = writeln!(o, "layer.{n}.output = {}", list(&l.output));
            let _ = writeln!(o, "layer.{n}.relu = {}", l.relu);
            if let Some(q) = &l.quant {
                let _ = writeln!(o, "layer.{n}.weight_bits = {}", q.weight_bits);
                let _ = writeln!(o, "layer.{n}.weight_exponent = {}", q.weight_exponent);
                let _ = writeln!(o, "layer.{n}.output_shift = {}", q.output_shift);
                let _ = writeln!(o, "layer.{n}.weight_bytes = {}", list(&[q.weight_bytes.0, q.weight_bytes.1]));
            }
            let _ = writeln!(o, "layer.{n}.output_offset = {}", l.output_offset);
            let _ = writeln!(o, "layer.{n}.output_bytes = {}", l.output_bytes);
            let _ = writeln!(o, "layer.{n}.processors = {}", list(&[l.processors.0, l.processors.1]));
        }
        let _ = writeln!(o, "plan.peak_bytes = {}", self.peak_bytes);
        let map: Vec<String> = self.processor_map().iter().map(|m| format!("\"{m}\"")).collect();
        let _ = writeln!(o, "plan.processor_map = [{}]", map.join(", "));
        o
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::malformed("model description", detail)
}

fn get<'a>(t: &'a toml::Table, key: &str) -> Result<&'a toml::Value> {
    t.get(key).ok_or_else(|| bad(format!("missing key {key}")))
}

fn int(t: &toml::Table, key: &str) -> Result<i64> {
    get(t, key)?.as_integer().ok_or_else(|| bad(format!("{key} is not an integer")))
}

fn uint(t: &toml::Table, key: &str) -> Result<usize> {
    usize::try_from(int(t, key)?).map_err(|_| bad(format!("{key} is negative")))
}

fn string(t: &toml::Table, key: &str) -> Result<String> {
    Ok(get(t, key)?.as_str().ok_or_else(|| bad(format!("{key} is not a string")))?.to_string())
}

fn uints<const N: usize>(t: &toml::Table, key: &str) -> Result<[usize; N]> {
    let arr = get(t, key)?.as_array().ok_or_else(|| bad(format!("{key} is not an array")))?;
    if arr.len() != N {
        return Err(bad(format!("{key} needs {N} entries")));
    }
    let mut out = [0; N];
    for (o, v) in out.iter_mut().zip(arr) {
        *o = v
            .as_integer()
            .and_then(|i| usize::try_from(i).ok())
            .ok_or_else(|| bad(format!("{key} holds a non-count")))?;
    }
    Ok(out)
}

fn table<'a>(t: &'a toml::Table, key: &str) -> Result<&'a toml::Table> {
    get(t, key)?.as_table().ok_or_else(|| bad(format!("{key} is not a group")))
}

pub fn parse_description(text: &str) -> Result<ModelDescription> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    let model = table(&root, "model")?;
    let plan = table(&root, "plan")?;
    let layer_tab = table(&root, "layer")?;
    let count = uint(model, "layer_count")?;
    if layer_tab.len() != count {
        return Err(bad(format!("layer_count {count} but {} layer groups", layer_tab.len())));
    }
    let mut layers = Vec::with_capacity(count);
    for n in 0..count {
        let l = table(layer_tab, &n.to_string())?;
        let quant = if l.contains_key("weight_bits") {
            let wb = uints::<2>(l, "weight_bytes")?;
            Some(LayerQuantInfo {
                weight_bits: u8::try_from(int(l, "weight_bits")?).map_err(|_| bad("weight_bits out of range"))?,
                weight_exponent: int(l, "weight_exponent")? as i32,
                output_shift: int(l, "output_shift")? as i32,
                weight_bytes: (wb[0], wb[1]),
            })
        } else {
            None
        };
        let p = uints::<2>(l, "processors")?;
        layers.push(DescribedLayer {
            kind: string(l, "kind")?,
            source: uint(l, "source")?,
            input: uints(l, "input")?,
            output: uints(l, "output")?,
            relu: get(l, "relu")?.as_bool().ok_or_else(|| bad("relu is not a boolean"))?,
            quant,
            output_offset: uint(l, "output_offset")?,
            output_bytes: uint(l, "output_bytes")?,
            processors: (p[0], p[1]),
        });
    }
    let desc = ModelDescription {
        head: string(model, "head")?,
        input: uints(model, "input")?,
        input_exponent: int(model, "input_exponent")? as i32,
        input_offset: uint(model, "input_offset")?,
        layers,
        peak_bytes: uint(plan, "peak_bytes")?,
    };
    let map = get(plan, "processor_map")?;
    if *map != toml::Value::try_from(desc.processor_map()).map_err(|e| bad(e.to_string()))? {
        return Err(bad("processor_map disagrees with the per-layer processor sets"));
    }
    Ok(desc)
}

impl ModelDescription {
    fn processor_map(&self) -> Vec<String> {
        self.layers
            .iter()
            .map(|l| format!("{}-{}", l.processors.0, (l.processors.0 + l.processors.1).saturating_sub(1)))
            .collect()
    }
}

pub fn export_description(model: &IntegerModel, plan: &MemoryPlan, path: &Path) -> Result<ModelDescription> {
    let desc = describe(model, plan)?;
    std::fs::write(path, desc.render()).map_err(|e| Error::io(path, e))?;
    Ok(desc)
}
