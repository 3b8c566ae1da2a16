use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{backward, forward, label_to_cell, loss, Adam, GridSpec, Head, NetworkSpec, Params, Real, Shape, Target};
use crate::error::{Error, Result};
use crate::framing::{downsample, fold_channels, EventFrame, Sample};

/// Input cells are counts; the float network sees `cell * 2^exponent`.
pub const DEFAULT_INPUT_EXPONENT: i32 = -2;

/// Samples per gradient chunk. Chunks are reduced in index order, so the
/// result does not depend on how many threads run them.
const GRAD_CHUNK: usize = 8;

/// Maps an ROI frame onto the network input lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputEncoder {
    pub input: Shape,
    pub exponent: i32,
}

impl InputEncoder {
    pub fn new(spec: &NetworkSpec, exponent: i32) -> Self {
        InputEncoder {
            input: spec.input,
            exponent,
        }
    }

    /// Downsamples (and folds, for multi-channel inputs) to the 8-bit input.
    pub fn encode_i8(&self, frame: &EventFrame) -> Result<Vec<i8>> {
        let Shape { c, h, w } = self.input;
        let full_w = w * c;
        let factor = (frame.width as usize / full_w.max(1)).max(1);
        let small = downsample(frame, factor)?;
        if small.width as usize != full_w || small.height as usize != h {
            return Err(Error::Shape(format!(
                "frame {}x{} cannot be reduced to network input {}x{}x{}",
                frame.width, frame.height, c, h, w
            )));
        }
        if c == 1 {
            Ok(small.cells)
        } else {
            Ok(fold_channels(&small, c)?.cells)
        }
    }

    pub fn encode<T: Real>(&self, frame: &EventFrame) -> Result<Vec<T>> {
        let scale = T::from_f64(2f64.powi(self.exponent));
        Ok(self
            .encode_i8(frame)?
            .into_iter()
            .map(|c| T::from_f64(c as f64) * scale)
            .collect())
    }
}

/// Training target for a sample; `None` for hidden labels under regression.
pub fn target_for(head: Head, sample: &Sample, grid: &GridSpec) -> Result<Option<Target>> {
    let l = sample.label;
    match head {
        Head::Regression if !l.visible => Ok(None),
        Head::Regression => Ok(Some(Target::Point {
            x: l.x / grid.roi_width,
            y: l.y / grid.roi_height,
        })),
        Head::Classification => Ok(Some(Target::Class(label_to_cell(l.x, l.y, l.visible, grid)?))),
    }
}

/// Pre-encoded inputs and targets.
#[derive(Debug, Clone, Default)]
pub struct EncodedSet {
    pub inputs: Vec<Vec<f32>>,
    pub targets: Vec<Target>,
    pub users: Vec<u32>,
    /// Index of each entry in the source sample slice.
    pub source: Vec<usize>,
}

impl EncodedSet {
    pub fn build<'a>(
        samples: impl IntoIterator<Item = (usize, &'a Sample)>,
        spec: &NetworkSpec,
        encoder: &InputEncoder,
        grid: &GridSpec,
    ) -> Result<Self> {
        let mut set = EncodedSet::default();
        for (i, s) in samples {
            if let Some(t) = target_for(spec.head, s, grid)? {
                set.inputs.push(encoder.encode(&s.frame)?);
                set.targets.push(t);
                set.users.push(s.user);
                set.source.push(i);
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub train_users: Vec<u32>,
    pub val_users: Vec<u32>,
    pub input_exponent: i32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch: 200,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            train_users: vec![10, 18, 20],
            val_users: vec![19],
            input_exponent: DEFAULT_INPUT_EXPONENT,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::InvalidParam("batch size must be at least 1".into()));
        }
        if self.train_users.is_empty() {
            return Err(Error::InvalidParam("no training users".into()));
        }
        if let Some(u) = self.train_users.iter().find(|u| self.val_users.contains(u)) {
            return Err(Error::InvalidParam(format!(
                "user {u} is in both the training and validation split"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub steps: u64,
    /// Users whose samples contributed to gradient batches this epoch.
    pub batch_users: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,steps,batch_users\n");
        for e in &self.epochs {
            let users: Vec<String> = e.batch_users.iter().map(u32::to_string).collect();
            let _ = writeln!(
                out,
                "{},{:.9},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_loss.map(|v| format!("{v:.9}")).unwrap_or_default(),
                e.steps,
                users.join(" ")
            );
        }
        out
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// Customization points used by quantization-aware training.
pub trait TrainHooks: Sync {
    fn epoch_start(&mut self, _epoch: usize, _params: &Params<f32>, _train: &EncodedSet) -> Result<()> {
        Ok(())
    }

    /// Parameters the forward pass should use instead of the raw ones.
    fn effective(&self, _params: &Params<f32>) -> Result<Option<Params<f32>>> {
        Ok(None)
    }

    fn act_quant(&self) -> Option<&[Option<i32>]> {
        None
    }

    fn adjust_grads(&self, _params: &Params<f32>, _grads: &mut Params<f32>) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

fn chunk_gradient(
    spec: &NetworkSpec,
    params: &Params<f32>,
    set: &EncodedSet,
    idx: &[usize],
    act_quant: Option<&[Option<i32>]>,
) -> Result<(Params<f32>, f64)> {
    let mut grads = Params::zeros(spec);
    let mut total = 0.0;
    for &i in idx {
        let (out, cache) = forward(spec, params, &set.inputs[i], act_quant)?;
        let (value, g) = loss(spec.head, &out, set.targets[i])?;
        total += value;
        backward(spec, params, &cache, &g, &mut grads, false)?;
    }
    Ok((grads, total))
}

/// Mean loss over `set` with the given parameters.
pub fn mean_loss(
    spec: &NetworkSpec,
    params: &Params<f32>,
    set: &EncodedSet,
    act_quant: Option<&[Option<i32>]>,
) -> Result<Option<f64>> {
    if set.is_empty() {
        return Ok(None);
    }
    let losses: Vec<f64> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let (out, _) = forward(spec, params, &set.inputs[i], act_quant)?;
            Ok(loss(spec.head, &out, set.targets[i])?.0)
        })
        .collect::<Result<_>>()?;
    Ok(Some(losses.iter().sum::<f64>() / losses.len() as f64))
}

/// Mini-batch Adam over `train_set`, deterministic for a given seed.
pub fn train_loop(
    spec: &NetworkSpec,
    init: Params<f32>,
    train_set: &EncodedSet,
    val_set: &EncodedSet,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Params<f32>, TrainLog)> {
    cfg.check()?;
    init.check(spec)?;
    if train_set.is_empty() {
        return Err(Error::Empty("training split has no usable samples".into()));
    }
    let mut params = init;
    let mut adam = Adam::new(spec, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        hooks.epoch_start(epoch, &params, train_set)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut users = BTreeSet::new();
        for batch in order.chunks(cfg.batch) {
            let effective = hooks.effective(&params)?;
            let used = effective.as_ref().unwrap_or(&params);
            let act_quant = hooks.act_quant();
            let parts: Vec<(Params<f32>, f64)> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|idx| chunk_gradient(spec, used, train_set, idx, act_quant))
                .collect::<Result<_>>()?;
            let mut parts = parts.into_iter();
            let (mut grads, mut batch_loss) = parts.next().expect("non-empty batch");
            for (g, l) in parts {
                grads.add_assign(&g);
                batch_loss += l;
            }
            grads.scale(1.0 / batch.len() as f32);
            hooks.adjust_grads(&params, &mut grads);
            adam.update(&mut params, &grads);
            epoch_loss += batch_loss;
            users.extend(batch.iter().map(|&i| train_set.users[i]));
        }
        let effective = hooks.effective(&params)?;
        let val_loss = mean_loss(spec, effective.as_ref().unwrap_or(&params), val_set, hooks.act_quant())?;
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            steps: adam.steps(),
            batch_users: users.into_iter().collect(),
        });
    }
    Ok((params, log))
}

/// Splits `dataset` by user and encodes both halves.
pub fn split_sets(
    spec: &NetworkSpec,
    dataset: &[Sample],
    cfg: &TrainConfig,
) -> Result<(EncodedSet, EncodedSet)> {
    cfg.check()?;
    let encoder = InputEncoder::new(spec, cfg.input_exponent);
    let grid = GridSpec::default();
    let pick = |users: &[u32]| -> Vec<(usize, &Sample)> {
        dataset
            .iter()
            .enumerate()
            .filter(|(_, s)| users.contains(&s.user))
            .collect()
    };
    let train = EncodedSet::build(pick(&cfg.train_users), spec, &encoder, &grid)?;
    let val = EncodedSet::build(pick(&cfg.val_users), spec, &encoder, &grid)?;
    if train.is_empty() {
        return Err(Error::Empty(format!(
            "no samples for training users {:?}",
            cfg.train_users
        )));
    }
    Ok((train, val))
}

/// Float training from a seeded initialization.
pub fn train(spec: &NetworkSpec, dataset: &[Sample], cfg: &TrainConfig) -> Result<(Params<f32>, TrainLog)> {
    spec.shapes()?;
    train_from(spec, Params::init(spec, cfg.seed), dataset, cfg, &mut NoHooks)
}

pub fn train_from(
    spec: &NetworkSpec,
    init: Params<f32>,
    dataset: &[Sample],
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Params<f32>, TrainLog)> {
    let (train_set, val_set) = split_sets(spec, dataset, cfg)?;
    train_loop(spec, init, &train_set, &val_set, cfg, hooks)
}
