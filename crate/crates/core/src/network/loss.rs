use super::{Head, Real};
use crate::error::{Error, Result};

/// Training target for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Pupil center normalized to `[0, 1]` per axis.
    Point { x: f64, y: f64 },
    Class(usize),
}

/// Loss value and its gradient with respect to the network output.
///
/// Regression uses the mean squared error over the two normalized
/// coordinates; classification uses softmax cross-entropy.
pub fn loss<T: Real>(head: Head, output: &[T], target: Target) -> Result<(f64, Vec<T>)> {
    if output.len() != head.outputs() {
        return Err(Error::Shape(format!(
            "{} head expects {} outputs, got {}",
            head.name(),
            head.outputs(),
            output.len()
        )));
    }
    match (head, target) {
        (Head::Regression, Target::Point { x, y }) => {
            let dx = output[0].as_f64() - x;
            let dy = output[1].as_f64() - y;
            Ok(((dx * dx + dy * dy) / 2.0, vec![T::from_f64(dx), T::from_f64(dy)]))
        }
        (Head::Classification, Target::Class(c)) if c < output.len() => {
            let max = output.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = output.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let value = -(exps[c] / sum).ln();
            let grad = exps
                .iter()
                .enumerate()
                .map(|(i, e)| T::from_f64(e / sum - if i == c { 1.0 } else { 0.0 }))
                .collect();
            Ok((value, grad))
        }
        _ => Err(Error::InvalidParam(format!(
            "target {target:?} does not match the {} head",
            head.name()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_regression_is_zero() {
        let (v, g) = loss(Head::Regression, &[0.25f64, 0.75], Target::Point { x: 0.25, y: 0.75 }).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_logits_cross_entropy() {
        let out = vec![0.3f64; 577];
        let (v, g) = loss(Head::Classification, &out, Target::Class(17)).unwrap();
        assert!((v - 577f64.ln()).abs() < 1e-12);
        assert!((v - 6.357).abs() < 1e-3);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn mismatched_target_is_rejected() {
        assert!(loss(Head::Regression, &[0.0f32, 0.0], Target::Class(1)).is_err());
        assert!(loss(Head::Classification, &[0.0f32; 577], Target::Class(577)).is_err());
    }
}
