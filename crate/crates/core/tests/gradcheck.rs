//! Analytic gradients of the total loss against central differences.

use fmdl::losses::Reduction;
use fmdl::maps::{NoiseMapSet, SegMapSet};
use fmdl::net::{ModelConfig, Network};
use fmdl::trainer::{batch_objective, LossWeights, SampleTargets};
use fmdl::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn targets(rng: &mut ChaCha8Rng, class: usize, sizes: [usize; 3]) -> SampleTargets<f64> {
    SampleTargets {
        class,
        masks: SegMapSet {
            maps: sizes.map(|s| Tensor::from_fn(1, s, s, |_, _, _| rng.random_range(0.0..1.0))),
        },
        noise: NoiseMapSet {
            maps: sizes.map(|s| Tensor::from_fn(3, s, s, |_, _, _| rng.random_range(-0.05..0.05))),
        },
    }
}

fn check(config: ModelConfig, seed: u64, reduction: Reduction) {
    let net = Network::new(config).unwrap();
    let mut params: Vec<f64> = net.init_params(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    // Nonzero biases keep ReLU inputs away from exact zeros.
    for p in params.iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let inputs: Vec<Tensor<f64>> = (0..2)
        .map(|_| Tensor::from_fn(3, 16, 16, |_, _, _| rng.random_range(-1.0..1.0)))
        .collect();
    let sizes = [4, 2, 1];
    let tgts: Vec<SampleTargets<f64>> = (0..2).map(|i| targets(&mut rng, i % 2, sizes)).collect();
    let batch: Vec<_> = inputs.iter().zip(&tgts).collect();
    let weights = LossWeights {
        lambda1: 0.7,
        lambda2: 1.3,
        reduction,
    };
    let (_, grads) = batch_objective(&net, &params, &batch, &weights).unwrap();

    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut worst_at = 0;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        let up = batch_objective(&net, &params, &batch, &weights).unwrap().0.total;
        params[i] = orig - h;
        let down = batch_objective(&net, &params, &batch, &weights).unwrap().0.total;
        params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[i];
        // The floor sits above the ~1e-9 round-off of the difference quotient.
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-5);
        if rel > worst {
            worst = rel;
            worst_at = i;
        }
    }
    let name = net
        .layout()
        .entries()
        .iter()
        .find(|e| e.range.contains(&worst_at))
        .map(|e| e.name.clone())
        .unwrap_or_default();
    assert!(
        worst < 1e-3,
        "worst relative error {worst} at parameter {worst_at} ({name}) over {} parameters",
        params.len()
    );
}

#[test]
fn tiny_model_gradients_match_finite_differences() {
    check(ModelConfig::tiny(16), 1, Reduction::Mean);
}

#[test]
fn aggregation_and_five_class_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        aggregation: true,
        num_classes: 5,
        ..ModelConfig::tiny(16)
    };
    check(cfg, 2, Reduction::Sum);
}
