use std::path::Path;

use super::{act_quant_map, weight_range, LayerQuantParams, ACT_MAX, ACT_MIN};
use crate::error::{Error, Result};
use crate::network::checkpoint::{read_spec, Reader};
use crate::network::ops::im2col;
use crate::network::{encode_spec, forward, LayerParams, LayerSpec, NetworkSpec, Params, Real, Shape};

pub const QUANTIZED_MAGIC: &[u8; 4] = b"EETQ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerLayer {
    pub quant: LayerQuantParams,
    /// Same layout as the float weights.
    pub weights: Vec<i8>,
    /// At accumulator scale `2^(input exponent + weight exponent)`.
    pub bias: Vec<i32>,
}

/// A network whose weights, biases and activations are all integers. The
/// final layer emits its raw 32-bit accumulator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegerModel {
    pub spec: NetworkSpec,
    pub layers: Vec<IntegerLayer>,
    pub input_exponent: i32,
}

/// Layer outputs as integers at every point both inference paths
/// materialize: every layer except a conv/dense whose ReLU is fused into it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub points: Vec<(usize, Vec<i32>)>,
}

/// The final layer keeps its wide output, so a ReLU after it is not fused.
fn fused_relu(spec: &NetworkSpec, i: usize) -> bool {
    spec.layers[i].is_parameterized()
        && spec.layers.get(i + 1) == Some(&LayerSpec::Relu)
        && spec.param_layer_indices().last() != Some(&i)
}

impl IntegerModel {
    /// Exponent of each parameterized layer's input.
    pub fn input_exponents(&self) -> Vec<i32> {
        let mut e = self.input_exponent;
        self.layers
            .iter()
            .map(|l| {
                let cur = e;
                e = cur + l.quant.weight_exponent + l.quant.output_shift;
                cur
            })
            .collect()
    }

    /// Exponent of each parameterized layer's output; for the last layer this
    /// is the accumulator exponent.
    pub fn output_exponents(&self) -> Vec<i32> {
        self.input_exponents()
            .iter()
            .zip(&self.layers)
            .map(|(e, l)| e + l.quant.weight_exponent + l.quant.output_shift)
            .collect()
    }

    /// Exponent of every layer's output, by layer index.
    pub fn layer_exponents(&self) -> Vec<i32> {
        let outs = self.output_exponents();
        let mut e = self.input_exponent;
        let mut p = 0;
        self.spec
            .layers
            .iter()
            .map(|l| {
                if l.is_parameterized() {
                    e = outs[p];
                    p += 1;
                }
                e
            })
            .collect()
    }

    pub fn act_quant(&self) -> Vec<Option<i32>> {
        let outs = self.output_exponents();
        act_quant_map(&self.spec, &outs[..outs.len().saturating_sub(1)])
    }

    /// The exact float values the integers stand for.
    pub fn dequantize(&self) -> Params<f64> {
        let ins = self.input_exponents();
        Params {
            layers: self
                .layers
                .iter()
                .zip(ins)
                .map(|(l, e_in)| {
                    let ws = 2f64.powi(l.quant.weight_exponent);
                    let bs = 2f64.powi(e_in + l.quant.weight_exponent);
                    LayerParams {
                        weights: l.weights.iter().map(|&w| w as f64 * ws).collect(),
                        bias: l.bias.iter().map(|&b| b as f64 * bs).collect(),
                    }
                })
                .collect(),
        }
    }

    /// Scale of the raw output integers.
    pub fn output_scale(&self) -> f64 {
        2f64.powi(*self.output_exponents().last().unwrap_or(&self.input_exponent))
    }

    pub fn check(&self) -> Result<()> {
        self.spec.shapes()?;
        let layers = self.spec.param_layers();
        if layers.len() != self.layers.len() {
            return Err(Error::Shape("quantized layers do not match spec".into()));
        }
        for (i, (spec, l)) in layers.iter().zip(&self.layers).enumerate() {
            super::check_bits(l.quant.weight_bits)?;
            let (lo, hi) = weight_range(l.quant.weight_bits);
            if l.weights.len() != spec.weight_count() || l.bias.len() != spec.bias_count() {
                return Err(Error::Shape(format!("layer {i} has wrong parameter counts")));
            }
            if let Some(w) = l.weights.iter().find(|&&w| (w as i64) < lo || (w as i64) > hi) {
                return Err(Error::Invariant(format!(
                    "layer {i} weight {w} outside the {}-bit range",
                    l.quant.weight_bits
                )));
            }
        }
        Ok(())
    }
}

/// Extracts integers from weights that already sit on their lattices.
pub fn lower<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    quant: &[LayerQuantParams],
    input_exponent: i32,
) -> Result<IntegerModel> {
    params.check(spec)?;
    if quant.len() != params.layers.len() {
        return Err(Error::Shape("one quantization entry per layer required".into()));
    }
    let mut e_in = input_exponent;
    let mut layers = Vec::with_capacity(quant.len());
    for (j, (lp, q)) in params.layers.iter().zip(quant).enumerate() {
        let (lo, hi) = weight_range(q.weight_bits);
        let ws = 2f64.powi(q.weight_exponent);
        let weights = lp
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let v = w.as_f64() / ws;
                if v.fract() != 0.0 || v < lo as f64 || v > hi as f64 {
                    Err(Error::OffLattice { layer: j, index: i, value: w.as_f64() })
                } else {
                    Ok(v as i8)
                }
            })
            .collect::<Result<_>>()?;
        let bs = 2f64.powi(e_in + q.weight_exponent);
        let bias = lp
            .bias
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let v = b.as_f64() / bs;
                if v.fract() != 0.0 || v < i32::MIN as f64 || v > i32::MAX as f64 {
                    Err(Error::OffLattice {
                        layer: j,
                        index: lp.weights.len() + i,
                        value: b.as_f64(),
                    })
                } else {
                    Ok(v as i32)
                }
            })
            .collect::<Result<_>>()?;
        layers.push(IntegerLayer { quant: *q, weights, bias });
        e_in += q.weight_exponent + q.output_shift;
    }
    let model = IntegerModel {
        spec: spec.clone(),
        layers,
        input_exponent,
    };
    model.check()?;
    Ok(model)
}

/// Rescales an accumulator: arithmetic shift with half-away-from-zero
/// rounding (left shift for negative amounts), then clamps.
fn requantize(acc: i64, shift: i32, lo: i64, hi: i64) -> i64 {
    let v = if shift > 0 {
        if shift >= 63 {
            0
        } else {
            let half = 1i64 << (shift - 1);
            if acc >= 0 {
                (acc + half) >> shift
            } else {
                -((-acc + half) >> shift)
            }
        }
    } else if acc == 0 {
        0
    } else if -shift >= 40 {
        if acc > 0 {
            hi
        } else {
            lo
        }
    } else {
        acc << -shift
    };
    v.clamp(lo, hi)
}

/// Accumulates `bias + W x` per output row with 32-bit arithmetic. Uses a
/// fast path when a per-row bound proves no partial sum can overflow.
fn accumulate(
    layer: usize,
    weights: &[i8],
    bias: &[i32],
    rows: usize,
    k: usize,
    cols: &[i32],
    n: usize,
    max_abs_input: i64,
) -> Result<Vec<i32>> {
    let mut out = vec![0i32; rows * n];
    for (o, acc) in out.chunks_mut(n).enumerate() {
        let w = &weights[o * k..(o + 1) * k];
        let bound: i64 =
            w.iter().map(|&x| (x as i64).abs()).sum::<i64>() * max_abs_input + (bias[o] as i64).abs();
        acc.iter_mut().for_each(|a| *a = bias[o]);
        if bound <= i32::MAX as i64 {
            for (kk, &wv) in w.iter().enumerate() {
                if wv == 0 {
                    continue;
                }
                let wv = wv as i32;
                let col = &cols[kk * n..(kk + 1) * n];
                for (a, &c) in acc.iter_mut().zip(col) {
                    *a += wv * c;
                }
            }
        } else {
            for (p, a) in acc.iter_mut().enumerate() {
                let mut s = bias[o];
                for (kk, &wv) in w.iter().enumerate() {
                    s = s
                        .checked_add(wv as i32 * cols[kk * n + p])
                        .ok_or(Error::AccumulatorOverflow { layer })?;
                }
                *a = s;
            }
        }
    }
    Ok(out)
}

fn run(model: &IntegerModel, input: &[i8], mut record: impl FnMut(usize, &[i32])) -> Result<Vec<i32>> {
    let spec = &model.spec;
    if input.len() != spec.input.len() {
        return Err(Error::Shape(format!(
            "input has {} values, model expects {}",
            input.len(),
            spec.input.len()
        )));
    }
    let last_param = *spec.param_layer_indices().last().ok_or_else(|| {
        Error::Shape("model has no parameterized layers".into())
    })?;
    let mut cur: Vec<i32> = input.iter().map(|&v| v as i32).collect();
    let mut shape = spec.input;
    let mut p = 0;
    let mut cols = Vec::new();
    let mut i = 0;
    while i < spec.layers.len() {
        let layer = spec.layers[i];
        let next = layer.output_shape(shape)?;
        let max_abs_input = 128;
        match layer {
            LayerSpec::Conv3x3 { .. } | LayerSpec::Dense { .. } => {
                let l = &model.layers[p];
                let (acc, rows) = match layer {
                    LayerSpec::Conv3x3 { out_ch, .. } => {
                        im2col(&cur, shape, &mut cols);
                        let n = shape.h * shape.w;
                        (accumulate(p, &l.weights, &l.bias, out_ch, shape.c * 9, &cols, n, max_abs_input)?, out_ch)
                    }
                    LayerSpec::Dense { inputs, outputs } => {
                        (accumulate(p, &l.weights, &l.bias, outputs, inputs, &cur, 1, max_abs_input)?, outputs)
                    }
                    _ => unreachable!(),
                };
                debug_assert_eq!(acc.len(), rows * next.h * next.w);
                p += 1;
                if i == last_param {
                    cur = acc;
                } else {
                    let lo = if fused_relu(spec, i) { 0 } else { ACT_MIN };
                    let shift = l.quant.output_shift;
                    cur = acc
                        .iter()
                        .map(|&a| requantize(a as i64, shift, lo, ACT_MAX) as i32)
                        .collect();
                }
                if fused_relu(spec, i) {
                    i += 1;
                }
            }
            LayerSpec::Relu => cur.iter_mut().for_each(|v| *v = (*v).max(0)),
            LayerSpec::MaxPool2x2 => cur = maxpool_int(&cur, shape),
            LayerSpec::Flatten => {}
        }
        record(i, &cur);
        shape = next;
        i += 1;
    }
    Ok(cur)
}

fn maxpool_int(input: &[i32], s: Shape) -> Vec<i32> {
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(s.c * oh * ow);
    for c in 0..s.c {
        let plane = &input[c * s.h * s.w..(c + 1) * s.h * s.w];
        for y in 0..oh {
            for x in 0..ow {
                let r0 = 2 * y * s.w + 2 * x;
                let r1 = r0 + s.w;
                out.push(plane[r0].max(plane[r0 + 1]).max(plane[r1]).max(plane[r1 + 1]));
            }
        }
    }
    out
}

/// Integer inference: the raw final-layer accumulators.
pub fn int_forward(model: &IntegerModel, input: &[i8]) -> Result<Vec<i32>> {
    run(model, input, |_, _| {})
}

pub fn int_trace(model: &IntegerModel, input: &[i8]) -> Result<Trace> {
    let mut points = Vec::new();
    run(model, input, |i, v| points.push((i, v.to_vec())))?;
    Ok(Trace { points })
}

/// The float path with fake-quantized weights and activations, expressed as
/// integers at the same points as [`int_trace`].
pub fn fake_quant_trace(model: &IntegerModel, params: &Params<f64>, input: &[i8]) -> Result<Trace> {
    let spec = &model.spec;
    let scale_in = 2f64.powi(model.input_exponent);
    let x: Vec<f64> = input.iter().map(|&v| v as f64 * scale_in).collect();
    let aq = model.act_quant();
    let (_, cache) = forward(spec, params, &x, Some(&aq))?;
    let exps = model.layer_exponents();
    let mut points = Vec::new();
    for i in 0..spec.layers.len() {
        if fused_relu(spec, i) {
            continue;
        }
        let s = 2f64.powi(exps[i]);
        let ints = cache
            .layer_output(i)
            .iter()
            .map(|&v| {
                let q = v / s;
                if q.fract() != 0.0 || q.abs() > i32::MAX as f64 {
                    Err(Error::Invariant(format!("layer {i} value {v} is off its lattice")))
                } else {
                    Ok(q as i32)
                }
            })
            .collect::<Result<_>>()?;
        points.push((i, ints));
    }
    Ok(Trace { points })
}

/// Packs two's-complement values LSB-first, padding the last byte with zeros.
pub fn pack_bits(values: &[i8], bits: u8) -> Vec<u8> {
    let bits = bits as usize;
    let mask = (1u16 << bits) - 1;
    let mut out = vec![0u8; (values.len() * bits).div_ceil(8)];
    for (i, &v) in values.iter().enumerate() {
        let code = (v as u8 as u16) & mask;
        let pos = i * bits;
        out[pos / 8] |= (code << (pos % 8)) as u8;
    }
    out
}

pub fn unpack_bits(bytes: &[u8], bits: u8, count: usize) -> Vec<i8> {
    let bits = bits as usize;
    let mask = (1u16 << bits) - 1;
    (0..count)
        .map(|i| {
            let pos = i * bits;
            let code = (bytes[pos / 8] as u16 >> (pos % 8)) & mask;
            // Sign-extend from `bits`.
            ((code << (8 - bits)) as u8 as i8) >> (8 - bits)
        })
        .collect()
}

/// `EETQ` layout. The input exponent is not stored; files always use
/// [`crate::network::DEFAULT_INPUT_EXPONENT`].
pub fn encode_integer_model(model: &IntegerModel) -> Result<Vec<u8>> {
    model.check()?;
    if model.input_exponent != crate::network::DEFAULT_INPUT_EXPONENT {
        return Err(Error::InvalidParam(format!(
            "quantized model files fix the input exponent at {}, model uses {}",
            crate::network::DEFAULT_INPUT_EXPONENT,
            model.input_exponent
        )));
    }
    let mut out = QUANTIZED_MAGIC.to_vec();
    encode_spec(&model.spec, &mut out)?;
    for (j, l) in model.layers.iter().enumerate() {
        let narrow = |v: i32, what: &str| {
            i8::try_from(v).map_err(|_| Error::InvalidParam(format!("layer {j} {what} {v} does not fit in i8")))
        };
        out.push(l.quant.weight_bits);
        out.push(narrow(l.quant.weight_exponent, "weight exponent")? as u8);
        out.push(narrow(l.quant.output_shift, "output shift")? as u8);
        out.extend_from_slice(&(l.weights.len() as u32).to_le_bytes());
        out.extend_from_slice(&pack_bits(&l.weights, l.quant.weight_bits));
        for b in &l.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_integer_model(bytes: &[u8]) -> Result<IntegerModel> {
    let mut r = Reader::new(bytes, "quantized model");
    r.magic(QUANTIZED_MAGIC)?;
    let spec = read_spec(&mut r)?;
    let mut layers = Vec::new();
    for (j, l) in spec.param_layers().iter().enumerate() {
        let at = r.position();
        let bits = r.u8()?;
        super::check_bits(bits)
            .map_err(|e| Error::malformed(format!("quantized model byte {at}"), e.to_string()))?;
        let weight_exponent = r.i8()? as i32;
        let output_shift = r.i8()? as i32;
        let count = r.u32()? as usize;
        if count != l.weight_count() {
            return Err(Error::malformed(
                format!("quantized model layer {j}"),
                format!("weight count {count}, spec needs {}", l.weight_count()),
            ));
        }
        let packed = r.take((count * bits as usize).div_ceil(8))?;
        let weights = unpack_bits(packed, bits, count);
        let bias = (0..l.bias_count()).map(|_| r.i32()).collect::<Result<_>>()?;
        layers.push(IntegerLayer {
            quant: LayerQuantParams {
                weight_bits: bits,
                weight_exponent,
                output_shift,
            },
            weights,
            bias,
        });
    }
    r.finish()?;
    let model = IntegerModel {
        spec,
        layers,
        input_exponent: crate::network::DEFAULT_INPUT_EXPONENT,
    };
    model.check()?;
    Ok(model)
}

pub fn write_integer_model(path: &Path, model: &IntegerModel) -> Result<()> {
    std::fs::write(path, encode_integer_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_integer_model(path: &Path) -> Result<IntegerModel> {
    decode_integer_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
