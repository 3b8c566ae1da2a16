//! Analytic gradients against central finite differences in f64.

mod common;

use common::{max_gradient_error, small_spec};
use eetnet::network::{Head, LayerSpec, NetworkSpec, Shape, Target};

#[test]
fn small_spec_covers_every_layer_kind() {
    let spec = small_spec(Head::Regression);
    for kind in ["conv3x3", "relu", "maxpool2x2", "flatten", "dense"] {
        assert!(spec.layers.iter().any(|l| l.name() == kind), "missing {kind}");
    }
}

#[test]
fn regression_gradients_match_finite_differences() {
    let spec = small_spec(Head::Regression);
    for seed in 0..3 {
        let worst = max_gradient_error(&spec, seed, Target::Point { x: 0.3, y: 0.7 });
        assert!(worst < 1e-4, "seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn classification_gradients_match_finite_differences() {
    let spec = NetworkSpec {
        input: Shape::new(2, 4, 6),
        layers: vec![
            LayerSpec::Conv3x3 { in_ch: 2, out_ch: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2x2,
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 18, outputs: 7 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: 7, outputs: 577 },
        ],
        head: Head::Classification,
    };
    let worst = max_gradient_error(&spec, 11, Target::Class(42));
    assert!(worst < 1e-4, "max relative error {worst:e}");
}
