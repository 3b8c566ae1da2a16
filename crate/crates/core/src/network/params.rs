use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{LayerSpec, NetworkSpec, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// Conv: `[out][in][3][3]`; dense: `[out][in]`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Weights and biases of every parameterized layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Real> Params<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Params {
            layers: spec
                .param_layers()
                .iter()
                .map(|l| LayerParams {
                    weights: vec![T::zero(); l.weight_count()],
                    bias: vec![T::zero(); l.bias_count()],
                })
                .collect(),
        }
    }

    /// He-normal weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .param_layers()
            .iter()
            .map(|l| {
                let fan_in = match *l {
                    LayerSpec::Conv3x3 { in_ch, .. } => in_ch * 9,
                    LayerSpec::Dense { inputs, .. } => inputs,
                    _ => unreachable!(),
                };
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                LayerParams {
                    weights: (0..l.weight_count())
                        .map(|_| T::from_f64(normal.sample(&mut rng)))
                        .collect(),
                    bias: vec![T::zero(); l.bias_count()],
                }
            })
            .collect();
        Params { layers }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let layers = spec.param_layers();
        if layers.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "spec has {} parameterized layers, weights have {}",
                layers.len(),
                self.layers.len()
            )));
        }
        for (i, (l, p)) in layers.iter().zip(&self.layers).enumerate() {
            if p.weights.len() != l.weight_count() || p.bias.len() != l.bias_count() {
                return Err(Error::Shape(format!("parameter sizes of layer {i} do not match spec")));
            }
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = T::zero());
            l.bias.iter_mut().for_each(|b| *b = T::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: l.weights.iter().map(|w| U::from_f64(w.as_f64())).collect(),
                    bias: l.bias.iter().map(|b| U::from_f64(b.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Flat iterator over all values, weights before biases per layer.
    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}
