//! Label-consistent flips and shifts that expand a dataset eightfold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::framing::{EventFrame, PupilLabel, Sample};

pub const DEFAULT_SHIFT_RANGE: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipMode {
    Vertical,
    Horizontal,
    Both,
}

/// Per-sample flip variants emitted by [`augment_dataset`], in order.
pub const FLIP_VARIANTS: [Option<FlipMode>; 4] = [
    None,
    Some(FlipMode::Vertical),
    Some(FlipMode::Horizontal),
    Some(FlipMode::Both),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentPlan {
    pub seed: u64,
    /// Shifts are drawn uniformly from `[-shift_range, shift_range]` on each axis.
    pub shift_range: i32,
}

impl AugmentPlan {
    pub fn new(seed: u64) -> Self {
        AugmentPlan {
            seed,
            shift_range: DEFAULT_SHIFT_RANGE,
        }
    }
}

pub fn flip(sample: &Sample, mode: FlipMode) -> Sample {
    let f = &sample.frame;
    let (w, h) = (f.width as usize, f.height as usize);
    let (fx, fy) = match mode {
        FlipMode::Vertical => (false, true),
        FlipMode::Horizontal => (true, false),
        FlipMode::Both => (true, true),
    };
    let mut cells = vec![0i8; w * h];
    for y in 0..h {
        let sy = if fy { h - 1 - y } else { y };
        for x in 0..w {
            let sx = if fx { w - 1 - x } else { x };
            cells[y * w + x] = f.cells[sy * w + sx];
        }
    }
    let mut label = sample.label;
    if label.visible {
        if fx {
            label.x = (w - 1) as f64 - label.x;
        }
        if fy {
            label.y = (h - 1) as f64 - label.y;
        }
    }
    Sample {
        user: sample.user,
        frame: EventFrame { cells, ..f.clone() },
        label,
    }
}

/// Translates the frame by `(dx, dy)`; cells pushed out are lost and vacated
/// cells are zero. A label pushed out of the frame becomes hidden.
pub fn shift(sample: &Sample, dx: i32, dy: i32) -> Sample {
    let f = &sample.frame;
    let (w, h) = (f.width as i32, f.height as i32);
    let mut cells = vec![0i8; f.cells.len()];
    for y in 0..h {
        let ty = y + dy;
        if ty < 0 || ty >= h {
            continue;
        }
        for x in 0..w {
            let tx = x + dx;
            if tx < 0 || tx >= w {
                continue;
            }
            cells[(ty * w + tx) as usize] = f.cells[(y * w + x) as usize];
        }
    }
    let label = if sample.label.visible {
        PupilLabel::bounded(
            sample.label.x + dx as f64,
            sample.label.y + dy as f64,
            w as f64,
            h as f64,
        )
    } else {
        sample.label
    };
    Sample {
        user: sample.user,
        frame: EventFrame { cells, ..f.clone() },
        label,
    }
}

fn augment_one(sample: &Sample, index: usize, plan: &AugmentPlan) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed ^ index as u64);
    let r = plan.shift_range.abs();
    let mut out = Vec::with_capacity(8);
    for variant in FLIP_VARIANTS {
        let base = match variant {
            None => sample.clone(),
            Some(mode) => flip(sample, mode),
        };
        let dx = rng.random_range(-r..=r);
        let dy = rng.random_range(-r..=r);
        let shifted = shift(&base, dx, dy);
        out.push(base);
        out.push(shifted);
    }
    out
}

/// Emits, for every input sample, the four flip variants each in unshifted
/// and randomly shifted form. Sample `i` draws its shifts from a generator
/// seeded with `plan.seed ^ i`, so output does not depend on scheduling.
pub fn augment_dataset(samples: &[Sample], plan: &AugmentPlan) -> Vec<Sample> {
    samples
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, s)| augment_one(s, i, plan))
        .collect()
}
