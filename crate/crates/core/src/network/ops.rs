//! Per-sample layer kernels on `[C][H][W]` row-major activations.

use super::{Real, Shape};

/// Unfolds a padded 3x3 neighborhood into `[C*9][H*W]` columns.
pub(crate) fn im2col<T: Copy + Default>(input: &[T], s: Shape, cols: &mut Vec<T>) {
    let (h, w) = (s.h, s.w);
    let hw = h * w;
    cols.clear();
    cols.resize(s.c * 9 * hw, T::default());
    for c in 0..s.c {
        let plane = &input[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 9) + ky * 3 + kx) * hw..][..hw];
                let dx = kx as isize - 1;
                let x_lo = if dx < 0 { 1 } else { 0 };
                let x_hi = if dx > 0 { w - 1 } else { w };
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    for x in x_lo..x_hi {
                        dst[x] = src[(x as isize + dx) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column gradients back into the input.
pub(crate) fn col2im<T: Real>(cols: &[T], s: Shape, out: &mut [T]) {
    let (h, w) = (s.h, s.w);
    let hw = h * w;
    out.iter_mut().for_each(|v| *v = T::zero());
    for c in 0..s.c {
        let plane = &mut out[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 9) + ky * 3 + kx) * hw..][..hw];
                let dx = kx as isize - 1;
                let x_lo = if dx < 0 { 1 } else { 0 };
                let x_hi = if dx > 0 { w - 1 } else { w };
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..][..w];
                    let dst = &mut plane[sy as usize * w..][..w];
                    for x in x_lo..x_hi {
                        dst[(x as isize + dx) as usize] += src[x];
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Real>(
    weights: &[T],
    bias: &[T],
    out_ch: usize,
    input_shape: Shape,
    cols: &[T],
) -> Vec<T> {
    let hw = input_shape.h * input_shape.w;
    let k = input_shape.c * 9;
    let mut out = vec![T::zero(); out_ch * hw];
    for (o, row) in out.chunks_mut(hw).enumerate() {
        row.iter_mut().for_each(|v| *v = bias[o]);
    }
    T::gemm(out_ch, k, hw, weights, false, cols, false, T::one(), &mut out);
    out
}

/// Returns the pooled plane and, per output, the flat input index of its max.
pub(crate) fn maxpool_forward<T: Real>(input: &[T], s: Shape) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(s.c * oh * ow);
    let mut arg = Vec::with_capacity(s.c * oh * ow);
    for c in 0..s.c {
        let base = c * s.h * s.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_i = base + (2 * oy) * s.w + 2 * ox;
                let mut best = input[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * oy + dy) * s.w + 2 * ox + dx;
                    if input[i] > best {
                        best = input[i];
                        best_i = i;
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn dense_forward<T: Real>(weights: &[T], bias: &[T], outputs: usize, input: &[T]) -> Vec<T> {
    let inputs = input.len();
    let mut out = bias.to_vec();
    T::gemm(outputs, inputs, 1, weights, false, input, false, T::one(), &mut out);
    out
}
