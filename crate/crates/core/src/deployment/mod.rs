//! Static deployment planning: buffer lifetimes, activation memory offsets,
//! processor assignment, a model description file and a cost model.

mod cost;
mod describe;

pub use cost::{estimate, macc_count, Estimate, MaccCount, PlatformProfile, BUILTIN_PROFILES};
pub use describe::{describe, export_description, parse_description, DescribedLayer, ModelDescription};

use crate::error::{Error, Result};
use crate::network::{LayerSpec, NetworkSpec};

/// One materialized activation buffer. Buffer 0 is the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferLifetime {
    /// Spec layer producing the buffer (after any fused ReLU); `None` for the input.
    pub layer: Option<usize>,
    pub size_bytes: usize,
    pub birth: usize,
    pub last_use: usize,
}

impl BufferLifetime {
    pub fn overlaps(&self, other: &BufferLifetime) -> bool {
        self.birth <= other.last_use && other.birth <= self.last_use
    }
}

/// An executable step: a conv/dense (with its ReLU fused), a pool, or a
/// standalone ReLU. Flatten is a pure reshape and does not execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    /// Index of the layer doing the work.
    pub layer: usize,
    /// Index of the layer whose output this step materializes.
    pub output_layer: usize,
}

pub fn executable_steps(spec: &NetworkSpec) -> Vec<Step> {
    let last_param = spec.param_layer_indices().last().copied();
    let mut steps = Vec::new();
    let mut i = 0;
    while i < spec.layers.len() {
        let l = spec.layers[i];
        match l {
            LayerSpec::Flatten => {}
            _ if l.is_parameterized()
                && Some(i) != last_param
                && spec.layers.get(i + 1) == Some(&LayerSpec::Relu) =>
            {
                steps.push(Step { layer: i, output_layer: i + 1 });
                i += 1;
            }
            _ => steps.push(Step { layer: i, output_layer: i }),
        }
        i += 1;
    }
    steps
}

/// Step `k` (1-based) consumes buffer `k - 1` and produces buffer `k`; the
/// input is born at step 0. Buffers are 8-bit except a wide final output.
pub fn lifetimes(spec: &NetworkSpec) -> Result<Vec<BufferLifetime>> {
    let shapes = spec.shapes()?;
    let last_param = spec.param_layer_indices().last().copied();
    let steps = executable_steps(spec);
    let mut out = vec![BufferLifetime {
        layer: None,
        size_bytes: spec.input.len(),
        birth: 0,
        last_use: if steps.is_empty() { 0 } else { 1 },
    }];
    for (k, s) in steps.iter().enumerate() {
        let step = k + 1;
        let width = if Some(s.layer) == last_param { 4 } else { 1 };
        out.push(BufferLifetime {
            layer: Some(s.output_layer),
            size_bytes: shapes[s.output_layer].len() * width,
            birth: step,
            last_use: if step == steps.len() { step } else { step + 1 },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryPlan {
    /// Offset of each buffer, parallel to the lifetime list.
    pub offsets: Vec<usize>,
    pub peak_bytes: usize,
    /// Processor set per executable step, as `first..first+count`.
    pub processors: Vec<std::ops::Range<usize>>,
}

/// Largest total size live at any one step, with that step.
pub fn live_peak(buffers: &[BufferLifetime]) -> (usize, usize) {
    let last = buffers.iter().map(|b| b.last_use).max().unwrap_or(0);
    (0..=last)
        .map(|s| {
            let live: usize = buffers
                .iter()
                .filter(|b| b.birth <= s && s <= b.last_use)
                .map(|b| b.size_bytes)
                .sum();
            (live, s)
        })
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .unwrap_or((0, 0))
}

/// Places each buffer, in the given order, at the lowest offset that does not
/// collide with an already placed, live-overlapping buffer.
pub fn lowest_fit(buffers: &[BufferLifetime], order: &[usize]) -> Vec<usize> {
    let mut offsets = vec![usize::MAX; buffers.len()];
    for &i in order {
        let mut busy: Vec<(usize, usize)> = order
            .iter()
            .filter(|&&j| offsets[j] != usize::MAX && buffers[j].overlaps(&buffers[i]))
            .map(|&j| (offsets[j], offsets[j] + buffers[j].size_bytes))
            .collect();
        busy.sort_unstable();
        let mut at = 0;
        for (lo, hi) in busy {
            if lo >= at + buffers[i].size_bytes {
                break;
            }
            at = at.max(hi);
        }
        offsets[i] = at;
    }
    offsets
}

/// Every buffer overlaps exactly its birth-order neighbours.
fn is_chain(buffers: &[BufferLifetime], order: &[usize]) -> bool {
    order.iter().enumerate().all(|(a, &i)| {
        order.iter().enumerate().all(|(b, &j)| {
            a == b || (buffers[i].overlaps(&buffers[j]) == (a.abs_diff(b) == 1))
        })
    })
}

fn birth_order(buffers: &[BufferLifetime]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..buffers.len()).collect();
    order.sort_by_key(|&i| (buffers[i].birth, i));
    order
}

/// Checks that no two live-overlapping buffers share a byte.
pub fn validate_plan(buffers: &[BufferLifetime], offsets: &[usize]) -> Result<()> {
    let last = buffers.iter().map(|b| b.last_use).max().unwrap_or(0);
    for s in 0..=last {
        let mut live: Vec<(usize, usize, usize)> = buffers
            .iter()
            .enumerate()
            .filter(|(_, b)| b.birth <= s && s <= b.last_use && b.size_bytes > 0)
            .map(|(i, b)| (offsets[i], offsets[i] + b.size_bytes, i))
            .collect();
        live.sort_unstable();
        for w in live.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::Invariant(format!(
                    "buffers {} and {} overlap at step {s}",
                    w[0].2, w[1].2
                )));
            }
        }
    }
    Ok(())
}

/// Assigns offsets with reuse. On a chain of lifetimes, buffers alternate
/// between the bottom and top of a region sized to the largest live pair,
/// which is optimal. Other shapes fall back to lowest-fit in birth order.
pub fn assign_offsets(buffers: &[BufferLifetime]) -> Result<(Vec<usize>, usize)> {
    for b in buffers {
        if b.birth > b.last_use {
            return Err(Error::InvalidParam("buffer dies before it is born".into()));
        }
    }
    let order = birth_order(buffers);
    let offsets = if is_chain(buffers, &order) {
        let (bound, _) = live_peak(buffers);
        let mut offsets = vec![0; buffers.len()];
        for (k, &i) in order.iter().enumerate() {
            offsets[i] = if k % 2 == 0 { 0 } else { bound - buffers[i].size_bytes };
        }
        offsets
    } else {
        lowest_fit(buffers, &order)
    };
    validate_plan(buffers, &offsets)?;
    let peak = buffers
        .iter()
        .zip(&offsets)
        .map(|(b, o)| o + b.size_bytes)
        .max()
        .unwrap_or(0);
    Ok((offsets, peak))
}

/// Processor set per executable step: `{0..c-1}` for `c` input channels,
/// every processor for dense layers.
pub fn map_processors(spec: &NetworkSpec, profile: &PlatformProfile) -> Result<Vec<std::ops::Range<usize>>> {
    let shapes = spec.shapes()?;
    executable_steps(spec)
        .iter()
        .map(|s| {
            let input = if s.layer == 0 { spec.input } else { shapes[s.layer - 1] };
            let n = match spec.layers[s.layer] {
                LayerSpec::Dense { .. } => profile.processor_count,
                _ => input.c,
            };
            if n > profile.processor_count {
                return Err(Error::ProcessorCapacity(format!(
                    "layer {} has {n} input channels, profile {} has {} processors",
                    s.layer, profile.name, profile.processor_count
                )));
            }
            Ok(0..n)
        })
        .collect()
}

pub fn plan_memory(spec: &NetworkSpec, profile: &PlatformProfile) -> Result<MemoryPlan> {
    let buffers = lifetimes(spec)?;
    let (need, step) = live_peak(&buffers);
    if need > profile.data_memory_bytes {
        return Err(Error::Capacity {
            step,
            required: need,
            available: profile.data_memory_bytes,
        });
    }
    let (offsets, peak_bytes) = assign_offsets(&buffers)?;
    if peak_bytes > profile.data_memory_bytes {
        return Err(Error::Capacity {
            step,
            required: peak_bytes,
            available: profile.data_memory_bytes,
        });
    }
    Ok(MemoryPlan {
        offsets,
        peak_bytes,
        processors: map_processors(spec, profile)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{canonical_spec, Head, Shape};

    fn chain(sizes: &[usize]) -> Vec<BufferLifetime> {
        sizes
            .iter()
            .enumerate()
            .map(|(k, &s)| BufferLifetime {
                layer: None,
                size_bytes: s,
                birth: k,
                last_use: (k + 1).min(sizes.len() - 1),
            })
            .collect()
    }

    #[test]
    fn three_buffer_chain() {
        let (offsets, peak) = assign_offsets(&chain(&[100, 50, 25])).unwrap();
        assert_eq!(peak, 150);
        assert_eq!(offsets[0], offsets[2]);
    }

    #[test]
    fn birth_order_lowest_fit_is_not_optimal_on_chains() {
        let b = chain(&[50, 100, 60]);
        let greedy = lowest_fit(&b, &[0, 1, 2]);
        let greedy_peak = b.iter().zip(&greedy).map(|(b, o)| o + b.size_bytes).max().unwrap();
        assert_eq!(greedy_peak, 210);
        assert_eq!(assign_offsets(&b).unwrap().1, 160);
    }

    #[test]
    fn single_and_disjoint() {
        let one = vec![BufferLifetime { layer: None, size_bytes: 7, birth: 0, last_use: 0 }];
        assert_eq!(assign_offsets(&one).unwrap(), (vec![0], 7));
        let disjoint: Vec<_> = [5, 9, 3]
            .iter()
            .enumerate()
            .map(|(k, &s)| BufferLifetime { layer: None, size_bytes: s, birth: 2 * k, last_use: 2 * k })
            .collect();
        assert_eq!(assign_offsets(&disjoint).unwrap().1, 9);
    }

    #[test]
    fn canonical_lifetimes() {
        let spec = canonical_spec(Head::Regression);
        let b = lifetimes(&spec).unwrap();
        assert_eq!(b.len(), 12);
        assert_eq!(b[0].size_bytes, 45 * 78);
        assert_eq!(b[1].size_bytes, 8 * 45 * 78);
        assert_eq!(b[11].size_bytes, 2 * 4);
        assert!(b.windows(2).all(|w| w[0].overlaps(&w[1])));
        let plan = plan_memory(&spec, &PlatformProfile::builtin("max78000-like").unwrap()).unwrap();
        let naive: usize = b.iter().map(|x| x.size_bytes).sum();
        assert!(plan.peak_bytes < naive);
        assert_eq!(plan.peak_bytes, 8 * 3510 + 16 * 3510);
    }

    #[test]
    fn one_layer_net_has_two_buffers() {
        let spec = NetworkSpec {
            input: Shape::flat(4),
            layers: vec![LayerSpec::Dense { inputs: 4, outputs: 2 }],
            head: Head::Regression,
        };
        let b = lifetimes(&spec).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b[0].overlaps(&b[1]));
    }

    #[test]
    fn processors() {
        let spec = canonical_spec(Head::Regression);
        let p = map_processors(&spec, &PlatformProfile::builtin("max78000-like").unwrap()).unwrap();
        assert_eq!(p[0], 0..1);
        // Steps: conv1 conv2 pool conv3 conv4 pool conv5 conv6 pool fc1 fc2.
        assert_eq!(p[6], 0..32);
        assert_eq!(p[9], 0..64);
        let wide = NetworkSpec {
            input: Shape::new(128, 4, 4),
            layers: vec![LayerSpec::Conv3x3 { in_ch: 128, out_ch: 2 }],
            head: Head::Regression,
        };
        assert!(matches!(
            map_processors(&wide, &PlatformProfile::builtin("max78000-like").unwrap()),
            Err(Error::ProcessorCapacity(_))
        ));
    }

    #[test]
    fn capacity_error_reports_step() {
        let spec = canonical_spec(Head::Regression);
        let mut p = PlatformProfile::builtin("max78000-like").unwrap();
        p.data_memory_bytes = 1000;
        match plan_memory(&spec, &p) {
            Err(Error::Capacity { step, required, .. }) => {
                assert_eq!(step, 2);
                assert_eq!(required, 8 * 3510 + 16 * 3510);
            }
            other => panic!("{other:?}"),
        }
    }
}
