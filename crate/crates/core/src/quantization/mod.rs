//! Power-of-two quantization: fake-quant with a straight-through estimator,
//! calibration statistics, per-layer presets, quantization-aware training,
//! and a bit-exact integer inference path.

mod calib;
mod integer;
mod presets;
mod qat;

pub use calib::{collect_stats, thresholds, CalibStats, LayerStats, DEFAULT_RESERVOIR, DEFAULT_Z_MAX};
pub use integer::{
    decode_integer_model, encode_integer_model, fake_quant_trace, int_forward, int_trace, lower,
    pack_bits, read_integer_model, unpack_bits, write_integer_model, IntegerLayer, IntegerModel,
    Trace, QUANTIZED_MAGIC,
};
pub use presets::{weight_size_bytes, PresetRegistry, QuantPreset, WeightSize};
pub use qat::{qat_train, quantize_params, QatHooks, QatResult, QuantState};

use crate::error::{Error, Result};
use crate::network::{LayerSpec, NetworkSpec, Real};

pub const ACTIVATION_BITS: u8 = 8;
pub const ACT_MIN: i64 = -128;
pub const ACT_MAX: i64 = 127;
pub const SUPPORTED_BITS: [u8; 4] = [1, 2, 4, 8];

/// Quantization of one conv or dense layer. Scales are `2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerQuantParams {
    pub weight_bits: u8,
    pub weight_exponent: i32,
    /// Right shift from accumulator scale to output activation scale; negative
    /// means a left shift. Zero on the final (wide-output) layer.
    pub output_shift: i32,
}

pub fn check_bits(bits: u8) -> Result<()> {
    if SUPPORTED_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("unsupported weight width {bits} bits")))
    }
}

/// Integer range of a weight width. One bit encodes {-1, 0}.
pub fn weight_range(bits: u8) -> (i64, i64) {
    if bits == 1 {
        (-1, 0)
    } else {
        (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1)
    }
}

/// Largest magnitude the positive side of a weight lattice reaches, used to
/// choose the scale.
pub fn weight_qmax_abs(bits: u8) -> i64 {
    if bits == 1 {
        1
    } else {
        (1i64 << (bits - 1)) - 1
    }
}

/// Smallest integer `e` with `qmax * 2^e >= threshold`.
pub fn exponent_for(threshold: f64, qmax: i64) -> Result<i32> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidParam(format!(
            "threshold must be positive and finite, got {threshold}"
        )));
    }
    let q = qmax as f64;
    let mut e = (threshold / q).log2().ceil() as i32;
    while q * 2f64.powi(e - 1) >= threshold {
        e -= 1;
    }
    while q * 2f64.powi(e) < threshold {
        e += 1;
    }
    Ok(e)
}

pub fn activation_exponent(threshold: f64) -> Result<i32> {
    exponent_for(threshold, ACT_MAX)
}

/// Weight exponent from the largest weight magnitude; all-zero layers get 0.
pub fn weight_exponent(max_abs: f64, bits: u8) -> Result<i32> {
    check_bits(bits)?;
    if max_abs == 0.0 {
        return Ok(0);
    }
    exponent_for(max_abs, weight_qmax_abs(bits))
}

/// Quantize-dequantize one value. Returns the result and whether the scaled
/// value fell inside `[qmin, qmax]` (the straight-through mask).
pub fn fake_quantize_scalar<T: Real>(v: T, exponent: i32, qmin: i64, qmax: i64) -> (T, bool) {
    let scale = 2f64.powi(exponent);
    let s = v.as_f64() / scale;
    let inside = s >= qmin as f64 && s <= qmax as f64;
    let q = s.round().clamp(qmin as f64, qmax as f64);
    (T::from_f64(q * scale), inside)
}

/// Fake-quantizes a tensor at `bits` and returns the straight-through mask.
pub fn fake_quantize<T: Real>(values: &[T], bits: u8, exponent: i32) -> Result<(Vec<T>, Vec<bool>)> {
    check_bits(bits)?;
    let (lo, hi) = weight_range(bits);
    Ok(values
        .iter()
        .map(|&v| fake_quantize_scalar(v, exponent, lo, hi))
        .unzip())
}

/// Straight-through backward: pass where the mask is set, zero elsewhere.
pub fn ste_backward<T: Real>(grad: &mut [T], mask: &[bool]) {
    for (g, &m) in grad.iter_mut().zip(mask) {
        if !m {
            *g = T::zero();
        }
    }
}

/// For each parameterized layer except the last, the layer index whose output
/// carries its 8-bit activation: the following ReLU if any, else the layer.
pub fn quant_points(spec: &NetworkSpec) -> Vec<usize> {
    let idx = spec.param_layer_indices();
    idx.iter()
        .take(idx.len().saturating_sub(1))
        .map(|&i| match spec.layers.get(i + 1) {
            Some(LayerSpec::Relu) => i + 1,
            _ => i,
        })
        .collect()
}

/// Expands per-quant-point exponents into the per-layer form `forward` takes.
pub fn act_quant_map(spec: &NetworkSpec, exponents: &[i32]) -> Vec<Option<i32>> {
    let mut map = vec![None; spec.layers.len()];
    for (&i, &e) in quant_points(spec).iter().zip(exponents) {
        map[i] = Some(e);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{canonical_spec, Head};

    #[test]
    fn exponent_search_examples() {
        assert_eq!(activation_exponent(3.2).unwrap(), -5);
        assert_eq!(activation_exponent(127.0).unwrap(), 0);
        assert_eq!(activation_exponent(127.0001).unwrap(), 1);
        assert!(activation_exponent(0.0).is_err());
        assert!(activation_exponent(-1.0).is_err());
        for t in [0.01, 0.3, 3.2, 17.0, 1000.0] {
            assert_eq!(activation_exponent(2.0 * t).unwrap(), activation_exponent(t).unwrap() + 1);
        }
    }

    #[test]
    fn fake_quant_examples() {
        let (v, inside) = fake_quantize_scalar(0.123f64, -7, -128, 127);
        assert_eq!(v, 0.125);
        assert!(inside);
        for b in SUPPORTED_BITS {
            let (q, _) = fake_quantize(&[0.0f64], b, -3).unwrap();
            assert_eq!(q[0], 0.0);
        }
        let vals: Vec<f64> = (-40..40).map(|i| i as f64 * 0.037).collect();
        let (q, _) = fake_quantize(&vals, 2, -2).unwrap();
        for v in q {
            assert!([-2.0, -1.0, 0.0, 1.0].contains(&(v * 4.0)));
        }
        assert!(fake_quantize(&[1.0f32], 3, 0).is_err());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(fake_quantize_scalar(2.5f64, 0, -128, 127).0, 3.0);
        assert_eq!(fake_quantize_scalar(-2.5f64, 0, -128, 127).0, -3.0);
        assert_eq!(fake_quantize_scalar(-0.5f64, 0, -128, 127).0, -1.0);
    }

    #[test]
    fn one_bit_lattice() {
        assert_eq!(weight_range(1), (-1, 0));
        let (q, mask) = fake_quantize(&[0.7f64, -0.7, -3.0], 1, 0).unwrap();
        assert_eq!(q, vec![0.0, -1.0, -1.0]);
        assert_eq!(mask, vec![false, true, false]);
    }

    #[test]
    fn quant_points_follow_relus() {
        let spec = canonical_spec(Head::Regression);
        assert_eq!(quant_points(&spec), vec![1, 3, 6, 8, 11, 13, 17]);
    }
}
