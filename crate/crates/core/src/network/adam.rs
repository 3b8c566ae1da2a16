use super::{NetworkSpec, Params};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Params<f32>,
    v: Params<f32>,
}

impl Adam {
    pub fn new(spec: &NetworkSpec, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Params::zeros(spec),
            v: Params::zeros(spec),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update with gradients `grads`.
    pub fn update(&mut self, params: &mut Params<f32>, grads: &Params<f32>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step_size = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        let update = |p: &mut [f32], g: &[f32], m: &mut [f32], v: &mut [f32]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() + eps);
            }
        };
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            update(&mut p.weights, &g.weights, &mut m.weights, &mut v.weights);
            update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, Shape};

    #[test]
    fn first_step_moves_by_lr() {
        let spec = NetworkSpec {
            input: Shape::flat(2),
            layers: vec![LayerSpec::Dense { inputs: 2, outputs: 1 }],
            head: crate::network::Head::Regression,
        };
        let mut p: Params<f32> = Params::zeros(&spec);
        let mut g: Params<f32> = Params::zeros(&spec);
        g.layers[0].weights = vec![3.0, -0.5];
        let mut adam = Adam::new(&spec, 1e-2, 0.9, 0.999, 1e-8);
        adam.update(&mut p, &g);
        assert!((p.layers[0].weights[0] + 1e-2).abs() < 1e-6);
        assert!((p.layers[0].weights[1] - 1e-2).abs() < 1e-6);
        assert_eq!(p.layers[0].bias[0], 0.0);
    }
}
