//! Shared fixtures: a toy member of the network family, a synthetic sparse
//! dataset sized for it, a finite-difference gradient check and a
//! brute-force memory-planning oracle.
#![allow(dead_code)]

use eetnet::deployment::{lowest_fit, BufferLifetime};
use eetnet::framing::{EventFrame, PupilLabel, Sample};
use eetnet::network::{
    backward, eetnet_spec, forward, loss, train, Head, NetworkSpec, Params, Shape, Target, TrainConfig,
};
use eetnet::quantization::{lower, qat_train, quantize_params, IntegerModel, QuantPreset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Toy input 1x11x19, frames at twice that resolution.
pub const TOY_FRAME_W: u16 = 38;
pub const TOY_FRAME_H: u16 = 22;

pub fn toy_spec(head: Head) -> NetworkSpec {
    eetnet_spec(Shape::new(1, 11, 19), [4, 4, 8, 8, 8, 8], 16, head)
}

/// Sparse frame with a ring of events around the label.
pub fn toy_sample(rng: &mut ChaCha8Rng, user: u32) -> Sample {
    let (w, h) = (TOY_FRAME_W as usize, TOY_FRAME_H as usize);
    let cx = rng.random_range(4.0..w as f64 - 4.0);
    let cy = rng.random_range(4.0..h as f64 - 4.0);
    let mut frame = EventFrame::zeros(TOY_FRAME_W, TOY_FRAME_H);
    for k in 0..24 {
        let a = k as f64 * std::f64::consts::TAU / 24.0;
        let x = (cx + 3.0 * a.cos()).round() as usize;
        let y = (cy + 3.0 * a.sin()).round() as usize;
        let v = if a.cos() > 0.0 { 1 } else { -1 };
        frame.set(x.min(w - 1), y.min(h - 1), v);
    }
    for _ in 0..10 {
        let (x, y) = (rng.random_range(0..w), rng.random_range(0..h));
        frame.set(x, y, rng.random_range(-2..=2));
    }
    frame.event_count = 34;
    Sample {
        user,
        frame,
        label: PupilLabel::visible(cx, cy),
    }
}

pub fn toy_dataset(per_user: usize, users: &[u32], seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users
        .iter()
        .flat_map(|&u| (0..per_user).map(|_| toy_sample(&mut rng, u)).collect::<Vec<_>>())
        .collect()
}

pub fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch: 16,
        lr: 3e-3,
        train_users: vec![1, 2],
        val_users: vec![3],
        ..TrainConfig::default()
    }
}

pub fn trained_toy(head: Head, seed: u64) -> (NetworkSpec, Vec<Sample>, Params<f32>) {
    let spec = toy_spec(head);
    let data = toy_dataset(48, &[1, 2, 3], seed);
    let mut cfg = toy_config(4);
    cfg.seed = seed;
    let (params, _) = train(&spec, &data, &cfg).unwrap();
    (spec, data, params)
}

/// One QAT epoch under `preset`, then lowering. Returns the integer model
/// and the fake-quantized float parameters it was lowered from.
pub fn lowered_toy(
    spec: &NetworkSpec,
    data: &[Sample],
    params: &Params<f32>,
    preset: &QuantPreset,
) -> (IntegerModel, Params<f64>) {
    let mut cfg = toy_config(1);
    cfg.lr = 1e-3;
    let res = qat_train(spec, params.clone(), data, preset, &cfg, 32).unwrap();
    let (q, lq) = quantize_params(spec, &res.params, &res.state).unwrap();
    let model = lower(spec, &q, &lq, res.state.input_exponent).unwrap();
    (model, q)
}

/// Half frame-like sparse inputs, half uniformly random bytes.
pub fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<i8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            (0..len)
                .map(|_| {
                    if k % 2 == 0 {
                        if rng.random_bool(0.15) {
                            rng.random_range(-8..=8)
                        } else {
                            0
                        }
                    } else {
                        rng.random::<i8>()
                    }
                })
                .collect()
        })
        .collect()
}

const EPS: f64 = 1e-6;

fn objective(spec: &NetworkSpec, params: &Params<f64>, x: &[f64], target: Target) -> f64 {
    let (out, _) = forward(spec, params, x, None).unwrap();
    loss(spec.head, &out, target).unwrap().0
}

fn rel_err(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

/// Weights first, then biases.
fn param_mut(p: &mut Params<f64>, layer: usize, i: usize) -> &mut f64 {
    let l = &mut p.layers[layer];
    let nw = l.weights.len();
    if i < nw {
        &mut l.weights[i]
    } else {
        &mut l.bias[i - nw]
    }
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter and input value.
pub fn max_gradient_error(spec: &NetworkSpec, seed: u64, target: Target) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::<f64>::init(spec, seed);
    for l in &mut params.layers {
        for b in &mut l.bias {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let x: Vec<f64> = (0..spec.input.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (out, cache) = forward(spec, &params, &x, None).unwrap();
    let (_, g_out) = loss(spec.head, &out, target).unwrap();
    let mut grads = Params::zeros(spec);
    let g_in = backward(spec, &params, &cache, &g_out, &mut grads, true).unwrap().unwrap();

    let mut worst = 0.0f64;
    for li in 0..params.layers.len() {
        for wi in 0..params.layers[li].weights.len() + params.layers[li].bias.len() {
            let mut p = params.clone();
            let v = *param_mut(&mut p, li, wi);
            *param_mut(&mut p, li, wi) = v + EPS;
            let up = objective(spec, &p, &x, target);
            *param_mut(&mut p, li, wi) = v - EPS;
            let down = objective(spec, &p, &x, target);
            let numeric = (up - down) / (2.0 * EPS);
            let analytic = *param_mut(&mut grads, li, wi);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] = x[i] + EPS;
        let up = objective(spec, &params, &xp, target);
        xp[i] = x[i] - EPS;
        let down = objective(spec, &params, &xp, target);
        worst = worst.max(rel_err(g_in[i], (up - down) / (2.0 * EPS)));
    }
    worst
}

/// Tiny network that still has every layer kind.
pub fn small_spec(head: Head) -> NetworkSpec {
    eetnet_spec(Shape::new(1, 8, 12), [2, 3, 3, 4, 4, 2], 5, head)
}

pub fn chain(sizes: &[usize]) -> Vec<BufferLifetime> {
    let n = sizes.len();
    sizes
        .iter()
        .enumerate()
        .map(|(k, &s)| BufferLifetime {
            layer: k.checked_sub(1),
            size_bytes: s,
            birth: k,
            last_use: if k + 1 == n { k } else { k + 1 },
        })
        .collect()
}

pub fn peak_of(buffers: &[BufferLifetime], offsets: &[usize]) -> usize {
    buffers.iter().zip(offsets).map(|(b, o)| o + b.size_bytes).max().unwrap_or(0)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Any optimal packing can be settled downward until each buffer rests on
/// a neighbour or on zero, which is a lowest-fit placement in order of
/// offset; so the best lowest-fit over all orders is the optimum.
pub fn brute_force_optimum(buffers: &[BufferLifetime]) -> usize {
    permutations(buffers.len())
        .iter()
        .map(|order| peak_of(buffers, &lowest_fit(buffers, order)))
        .min()
        .unwrap()
}
