use super::ops::{col2im, conv_forward, dense_forward, im2col, maxpool_forward};
use super::{LayerSpec, NetworkSpec, Params, Real, Shape};
use crate::error::{Error, Result};
use crate::quantization::fake_quantize_scalar;

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input_shapes: Vec<Shape>,
    /// `acts[i]` is the input of layer `i`; the last entry is the network output.
    acts: Vec<Vec<T>>,
    cols: Vec<Vec<T>>,
    pool_idx: Vec<Vec<u32>>,
    /// Straight-through mask for layers whose output was fake-quantized.
    quant_mask: Vec<Option<Vec<bool>>>,
    /// Pre-quantization output of each fake-quantized layer.
    raw: Vec<Option<Vec<T>>>,
}

impl<T: Real> ForwardCache<T> {
    /// Output of layer `i` (after any activation fake-quantization).
    pub fn layer_output(&self, i: usize) -> &[T] {
        &self.acts[i + 1]
    }

    /// Output of layer `i` before activation fake-quantization. Calibration
    /// reads this so a threshold is never bounded by its own clamp.
    pub fn raw_output(&self, i: usize) -> &[T] {
        self.raw[i].as_deref().unwrap_or(&self.acts[i + 1])
    }

    pub fn input(&self) -> &[T] {
        &self.acts[0]
    }
}

/// Float forward pass. `act_quant[i] = Some(e)` fake-quantizes the output of
/// layer `i` to signed 8-bit with scale `2^e`.
pub fn forward<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    input: &[T],
    act_quant: Option<&[Option<i32>]>,
) -> Result<(Vec<T>, ForwardCache<T>)> {
    if input.len() != spec.input.len() {
        return Err(Error::Shape(format!(
            "input has {} values, spec expects {}",
            input.len(),
            spec.input.len()
        )));
    }
    if params.layers.len() != spec.param_layers().len() {
        return Err(Error::Shape("weights do not match spec".into()));
    }
    let n = spec.layers.len();
    let mut cache = ForwardCache {
        input_shapes: Vec::with_capacity(n),
        acts: Vec::with_capacity(n + 1),
        cols: vec![Vec::new(); n],
        pool_idx: vec![Vec::new(); n],
        quant_mask: vec![None; n],
        raw: vec![None; n],
    };
    let mut shape = spec.input;
    let mut cur = input.to_vec();
    let mut p = 0usize;
    for (i, layer) in spec.layers.iter().enumerate() {
        let next_shape = layer.output_shape(shape)?;
        cache.input_shapes.push(shape);
        let out = match *layer {
            LayerSpec::Conv3x3 { out_ch, .. } => {
                let lp = &params.layers[p];
                p += 1;
                let mut cols = Vec::new();
                im2col(&cur, shape, &mut cols);
                let out = conv_forward(&lp.weights, &lp.bias, out_ch, shape, &cols);
                cache.cols[i] = cols;
                out
            }
            LayerSpec::Relu => cur.iter().map(|&v| v.max(T::zero())).collect(),
            LayerSpec::MaxPool2x2 => {
                let (out, idx) = maxpool_forward(&cur, shape);
                cache.pool_idx[i] = idx;
                out
            }
            LayerSpec::Flatten => cur.clone(),
            LayerSpec::Dense { outputs, .. } => {
                let lp = &params.layers[p];
                p += 1;
                dense_forward(&lp.weights, &lp.bias, outputs, &cur)
            }
        };
        let out = match act_quant.and_then(|q| q.get(i).copied().flatten()) {
            Some(e) => {
                let mut mask = Vec::with_capacity(out.len());
                let q: Vec<T> = out
                    .iter()
                    .map(|&v| {
                        let (fq, inside) = fake_quantize_scalar(v, e, -128, 127);
                        mask.push(inside);
                        fq
                    })
                    .collect();
                cache.quant_mask[i] = Some(mask);
                cache.raw[i] = Some(out);
                q
            }
            None => out,
        };
        cache.acts.push(std::mem::replace(&mut cur, out));
        shape = next_shape;
    }
    cache.acts.push(cur.clone());
    Ok((cur, cache))
}

pub fn predict<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    input: &[T],
    act_quant: Option<&[Option<i32>]>,
) -> Result<Vec<T>> {
    forward(spec, params, input, act_quant).map(|(out, _)| out)
}

/// Accumulates parameter gradients into `grads` and optionally returns the
/// gradient with respect to the input.
pub fn backward<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    cache: &ForwardCache<T>,
    output_grad: &[T],
    grads: &mut Params<T>,
    need_input_grad: bool,
) -> Result<Option<Vec<T>>> {
    let n = spec.layers.len();
    if cache.acts.len() != n + 1 {
        return Err(Error::Shape("forward cache does not match spec".into()));
    }
    if output_grad.len() != cache.acts[n].len() {
        return Err(Error::Shape("output gradient size mismatch".into()));
    }
    let mut g = output_grad.to_vec();
    let mut p = params.layers.len();
    for i in (0..n).rev() {
        if let Some(mask) = &cache.quant_mask[i] {
            g.iter_mut().zip(mask).for_each(|(v, &m)| {
                if !m {
                    *v = T::zero()
                }
            });
        }
        let s = cache.input_shapes[i];
        let x = &cache.acts[i];
        let want_input = i > 0 || need_input_grad;
        g = match spec.layers[i] {
            LayerSpec::Conv3x3 { out_ch, .. } => {
                p -= 1;
                let hw = s.h * s.w;
                let k = s.c * 9;
                let cols = &cache.cols[i];
                let gl = &mut grads.layers[p];
                T::gemm(out_ch, hw, k, &g, false, cols, true, T::one(), &mut gl.weights);
                for (o, row) in g.chunks(hw).enumerate() {
                    let mut s = T::zero();
                    row.iter().for_each(|&v| s += v);
                    gl.bias[o] += s;
                }
                if want_input {
                    let mut dcols = vec![T::zero(); k * hw];
                    T::gemm(k, out_ch, hw, &params.layers[p].weights, true, &g, false, T::zero(), &mut dcols);
                    let mut gi = vec![T::zero(); s.len()];
                    col2im(&dcols, s, &mut gi);
                    gi
                } else {
                    Vec::new()
                }
            }
            LayerSpec::Relu => g
                .iter()
                .zip(x)
                .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                .collect(),
            LayerSpec::MaxPool2x2 => {
                let mut gi = vec![T::zero(); s.len()];
                for (&idx, &gv) in cache.pool_idx[i].iter().zip(&g) {
                    gi[idx as usize] += gv;
                }
                gi
            }
            LayerSpec::Flatten => g,
            LayerSpec::Dense { inputs, outputs } => {
                p -= 1;
                let gl = &mut grads.layers[p];
                T::gemm(outputs, 1, inputs, &g, false, x, false, T::one(), &mut gl.weights);
                gl.bias.iter_mut().zip(&g).for_each(|(b, &v)| *b += v);
                if want_input {
                    let mut gi = vec![T::zero(); inputs];
                    T::gemm(inputs, outputs, 1, &params.layers[p].weights, true, &g, false, T::zero(), &mut gi);
                    gi
                } else {
                    Vec::new()
                }
            }
        };
        if !want_input {
            return Ok(None);
        }
    }
    Ok(Some(g))
}
