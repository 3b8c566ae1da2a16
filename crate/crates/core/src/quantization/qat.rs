use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    act_quant_map, activation_exponent, collect_stats, fake_quantize, thresholds, weight_exponent,
    weight_range, LayerQuantParams, QuantPreset, DEFAULT_RESERVOIR, DEFAULT_Z_MAX,
};
use crate::error::{Error, Result};
use crate::framing::Sample;
use crate::network::{
    split_sets, train_loop, EncodedSet, NetworkSpec, Params, Real, TrainConfig, TrainHooks, TrainLog,
};

/// Thresholds below this are raised to it so dead layers still get a scale.
pub const MIN_THRESHOLD: f64 = 1.0 / (1u64 << 20) as f64;

/// Everything besides the weights needed to lower a QAT model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantState {
    pub preset: String,
    pub bits: Vec<u8>,
    pub input_exponent: i32,
    /// Per quantization point, already floored at [`MIN_THRESHOLD`].
    pub thresholds: Vec<f64>,
}

impl QuantState {
    pub fn act_exponents(&self) -> Result<Vec<i32>> {
        self.thresholds.iter().map(|&t| activation_exponent(t)).collect()
    }
}

/// Fake-quantizes weights and (when activation exponents are known) biases.
/// Also returns per-layer quantization parameters and the weight STE masks.
fn fake_quant_params<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    bits: &[u8],
    input_exponent: i32,
    act_exps: Option<&[i32]>,
) -> Result<(Params<T>, Vec<LayerQuantParams>, Vec<Vec<bool>>)> {
    params.check(spec)?;
    let n = params.layers.len();
    if bits.len() != n {
        return Err(Error::Shape(format!("{} bit widths for {n} layers", bits.len())));
    }
    if let Some(a) = act_exps {
        if a.len() + 1 != n {
            return Err(Error::Shape(format!("{} activation exponents for {n} layers", a.len())));
        }
    }
    let mut out = params.clone();
    let mut quant = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for (j, lp) in out.layers.iter_mut().enumerate() {
        let max_abs = lp.weights.iter().fold(0.0f64, |m, w| m.max(w.as_f64().abs()));
        let e_w = weight_exponent(max_abs, bits[j])?;
        let (q, mask) = fake_quantize(&lp.weights, bits[j], e_w)?;
        lp.weights = q;
        masks.push(mask);
        let mut shift = 0;
        if let Some(a) = act_exps {
            let e_in = if j == 0 { input_exponent } else { a[j - 1] };
            let scale = 2f64.powi(e_in + e_w);
            for b in lp.bias.iter_mut() {
                let q = (b.as_f64() / scale).round().clamp(i32::MIN as f64, i32::MAX as f64);
                *b = T::from_f64(q * scale);
            }
            if j + 1 < n {
                shift = a[j] - e_in - e_w;
            }
        }
        quant.push(LayerQuantParams {
            weight_bits: bits[j],
            weight_exponent: e_w,
            output_shift: shift,
        });
    }
    Ok((out, quant, masks))
}

/// Deterministic final quantization in f64: every value lands exactly on its
/// lattice, ready for [`super::lower`].
pub fn quantize_params<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    state: &QuantState,
) -> Result<(Params<f64>, Vec<LayerQuantParams>)> {
    let exps = state.act_exponents()?;
    let (p, q, _) = fake_quant_params(spec, &params.cast::<f64>(), &state.bits, state.input_exponent, Some(&exps))?;
    Ok((p, q))
}

/// Training hooks that simulate quantization in every forward pass.
pub struct QatHooks<'a> {
    spec: &'a NetworkSpec,
    pub state: QuantState,
    calib: Vec<Vec<f32>>,
    act_exps: Option<Vec<i32>>,
    act_quant: Option<Vec<Option<i32>>>,
    seed: u64,
    z_max: f64,
}

impl<'a> QatHooks<'a> {
    pub fn new(
        spec: &'a NetworkSpec,
        preset: &QuantPreset,
        input_exponent: i32,
        calib: Vec<Vec<f32>>,
        seed: u64,
    ) -> Result<Self> {
        if calib.is_empty() {
            return Err(Error::Empty("calibration subset is empty".into()));
        }
        Ok(QatHooks {
            spec,
            state: QuantState {
                preset: preset.name.clone(),
                bits: preset.layer_bits(spec)?,
                input_exponent,
                thresholds: Vec::new(),
            },
            calib,
            act_exps: None,
            act_quant: None,
            seed,
            z_max: DEFAULT_Z_MAX,
        })
    }

    /// Recomputes activation thresholds from the calibration subset.
    pub fn refresh(&mut self, params: &Params<f32>) -> Result<()> {
        let effective = self.effective(params)?.unwrap_or_else(|| params.clone());
        let stats = collect_stats(
            self.spec,
            &effective,
            &self.calib,
            0,
            self.act_quant.as_deref(),
            self.seed,
            DEFAULT_RESERVOIR,
        )?;
        let th: Vec<f64> = thresholds(&stats, self.z_max)
            .into_iter()
            .map(|t| t.max(MIN_THRESHOLD))
            .collect();
        let exps = th.iter().map(|&t| activation_exponent(t)).collect::<Result<Vec<_>>>()?;
        self.act_quant = Some(act_quant_map(self.spec, &exps));
        self.act_exps = Some(exps);
        self.state.thresholds = th;
        Ok(())
    }
}

impl TrainHooks for QatHooks<'_> {
    fn epoch_start(&mut self, _epoch: usize, params: &Params<f32>, _train: &EncodedSet) -> Result<()> {
        self.refresh(params)
    }

    fn effective(&self, params: &Params<f32>) -> Result<Option<Params<f32>>> {
        let (p, _, _) = fake_quant_params(
            self.spec,
            params,
            &self.state.bits,
            self.state.input_exponent,
            self.act_exps.as_deref(),
        )?;
        Ok(Some(p))
    }

    fn act_quant(&self) -> Option<&[Option<i32>]> {
        self.act_quant.as_deref()
    }

    fn adjust_grads(&self, params: &Params<f32>, grads: &mut Params<f32>) {
        for ((lp, g), &bits) in params.layers.iter().zip(grads.layers.iter_mut()).zip(&self.state.bits) {
            let max_abs = lp.weights.iter().fold(0.0f64, |m, w| m.max(w.abs() as f64));
            let Ok(e) = weight_exponent(max_abs, bits) else { continue };
            let (lo, hi) = weight_range(bits);
            let scale = 2f64.powi(e);
            for (gw, w) in g.weights.iter_mut().zip(&lp.weights) {
                let s = *w as f64 / scale;
                if s < lo as f64 || s > hi as f64 {
                    *gw = 0.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct QatResult {
    /// Latent float weights; pass through [`quantize_params`] to deploy.
    pub params: Params<f32>,
    pub state: QuantState,
    pub log: TrainLog,
}

/// Quantization-aware fine-tuning from `init`. Thresholds come from a fixed,
/// seeded subset of `calib_size` training samples and are refreshed at the
/// start of every epoch. The returned state holds the thresholds the last
/// epoch trained against.
pub fn qat_train(
    spec: &NetworkSpec,
    init: Params<f32>,
    dataset: &[Sample],
    preset: &QuantPreset,
    cfg: &TrainConfig,
    calib_size: usize,
) -> Result<QatResult> {
    let (train_set, val_set) = split_sets(spec, dataset, cfg)?;
    let mut idx: Vec<usize> = (0..train_set.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xCA11_B4A7));
    idx.truncate(calib_size.max(1));
    idx.sort_unstable();
    let calib = idx.iter().map(|&i| train_set.inputs[i].clone()).collect();
    let mut hooks = QatHooks::new(spec, preset, cfg.input_exponent, calib, cfg.seed)?;
    let (params, log) = train_loop(spec, init, &train_set, &val_set, cfg, &mut hooks)?;
    Ok(QatResult {
        params,
        state: hooks.state,
        log,
    })
}
