use rayon::prelude::*;

use super::quant_points;
use crate::error::{Error, Result};
use crate::network::{forward, NetworkSpec, Params, Real};

pub const DEFAULT_Z_MAX: f64 = 3.0;
pub const DEFAULT_RESERVOIR: usize = 16384;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Running moments plus a bottom-k hash-priority sample of one layer's
/// activations. Priorities depend only on (seed, sample, element), so the
/// sample is the same however observations are batched and merged.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
    /// Signed activation with the largest magnitude.
    pub extreme: f64,
    capacity: usize,
    reservoir: Vec<(u64, f64)>,
}

impl LayerStats {
    pub fn new(capacity: usize) -> Self {
        LayerStats {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            extreme: 0.0,
            capacity: capacity.max(1),
            reservoir: Vec::new(),
        }
    }

    /// Adds one batch of `(priority, value)` pairs.
    fn observe(&mut self, values: Vec<(u64, f64)>) {
        if values.is_empty() {
            return;
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|e| e.1).sum::<f64>() / n;
        let mut batch = LayerStats::new(self.capacity);
        batch.count = values.len() as u64;
        batch.mean = mean;
        batch.m2 = values.iter().map(|e| (e.1 - mean) * (e.1 - mean)).sum();
        batch.extreme = values.iter().fold(0.0, |m: f64, e| {
            if e.1.abs() > m.abs() || (e.1.abs() == m.abs() && e.1 > m) {
                e.1
            } else {
                m
            }
        });
        batch.reservoir = values;
        batch.compact();
        self.merge(&batch);
    }

    fn compact(&mut self) {
        let cap = self.capacity;
        let key = |e: &(u64, f64)| (e.0, e.1.to_bits());
        if self.reservoir.len() > cap {
            self.reservoir.select_nth_unstable_by_key(cap, key);
            self.reservoir.truncate(cap);
        }
        self.reservoir.sort_unstable_by_key(key);
    }

    /// Chan's parallel update for the moments; exact union for the rest.
    pub fn merge(&mut self, other: &LayerStats) {
        if other.count == 0 {
            return;
        }
        let n = self.count + other.count;
        let d = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += d * nb / n as f64;
        self.m2 += other.m2 + d * d * na * nb / n as f64;
        self.count = n;
        if other.extreme.abs() > self.extreme.abs()
            || (other.extreme.abs() == self.extreme.abs() && other.extreme > self.extreme)
        {
            self.extreme = other.extreme;
        }
        self.reservoir.extend_from_slice(&other.reservoir);
        self.compact();
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.extreme.abs()
    }

    pub fn sample(&self) -> impl Iterator<Item = f64> + '_ {
        self.reservoir.iter().map(|e| e.1)
    }

    /// Largest |x| among sampled values with |z| <= z_max.
    pub fn threshold(&self, z_max: f64) -> f64 {
        let std = self.variance().sqrt();
        if self.count == 0 {
            return 0.0;
        }
        if std == 0.0 || z_max.is_infinite() {
            return self.max_abs();
        }
        let inlier = |v: f64| ((v - self.mean) / std).abs() <= z_max;
        let mut t = self
            .sample()
            .filter(|&v| inlier(v))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if inlier(self.extreme) {
            t = t.max(self.max_abs());
        }
        t
    }
}

/// Per quantization point statistics (every parameterized layer but the last).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibStats {
    pub seed: u64,
    pub layers: Vec<LayerStats>,
}

impl CalibStats {
    pub fn new(layers: usize, capacity: usize, seed: u64) -> Self {
        CalibStats {
            seed,
            layers: vec![LayerStats::new(capacity); layers],
        }
    }

    pub fn merge(&mut self, other: &CalibStats) -> Result<()> {
        if self.seed != other.seed || self.layers.len() != other.layers.len() {
            return Err(Error::InvalidParam("merging incompatible calibration stats".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.merge(b);
        }
        Ok(())
    }

    /// Records one input's activations. `sample` must be unique per input.
    pub fn observe(&mut self, sample: u64, activations: &[&[f64]]) {
        for (l, (stats, acts)) in self.layers.iter_mut().zip(activations).enumerate() {
            let base = splitmix64(self.seed ^ splitmix64(sample ^ ((l as u64) << 56)));
            stats.observe(
                acts.iter()
                    .enumerate()
                    .map(|(i, &v)| (splitmix64(base ^ i as u64), v))
                    .collect(),
            );
        }
    }
}

/// Runs the model over `inputs` and gathers post-activation statistics at
/// each quantization point, taken before that point's own clamp. Input `i` is keyed as sample `first_index + i`.
pub fn collect_stats<T: Real>(
    spec: &NetworkSpec,
    params: &Params<T>,
    inputs: &[Vec<T>],
    first_index: u64,
    act_quant: Option<&[Option<i32>]>,
    seed: u64,
    capacity: usize,
) -> Result<CalibStats> {
    if inputs.is_empty() {
        return Err(Error::Empty("calibration set is empty".into()));
    }
    let points = quant_points(spec);
    let parts: Vec<CalibStats> = inputs
        .par_chunks(8)
        .enumerate()
        .map(|(c, chunk)| {
            let mut stats = CalibStats::new(points.len(), capacity, seed);
            for (j, x) in chunk.iter().enumerate() {
                let (_, cache) = forward(spec, params, x, act_quant)?;
                let acts: Vec<Vec<f64>> = points
                    .iter()
                    .map(|&p| cache.raw_output(p).iter().map(|v| v.as_f64()).collect())
                    .collect();
                let refs: Vec<&[f64]> = acts.iter().map(Vec::as_slice).collect();
                stats.observe(first_index + (c * 8 + j) as u64, &refs);
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;
    let mut total = CalibStats::new(points.len(), capacity, seed);
    for p in &parts {
        total.merge(p)?;
    }
    Ok(total)
}

pub fn thresholds(stats: &CalibStats, z_max: f64) -> Vec<f64> {
    stats.layers.iter().map(|l| l.threshold(z_max)).collect()
}
