//! Central finite differences against the analytic backward pass.

use mcsloc_core::seed::rng_for;
use mcsloc_core::tcn::{cross_entropy, Network, NetworkConfig};
use rand::Rng;

fn loss(net: &Network<f64>, batch: &[Vec<f64>], labels: &[usize]) -> f64 {
    let pass = net.forward(batch).unwrap();
    cross_entropy(&pass.probs(), net.config().n_classes, labels).unwrap()
}

/// Worst relative error over every parameter for one random batch.
fn worst_error(seed: u64) -> (f64, String) {
    let cfg = NetworkConfig::standard(5, 4, 2, 2, 8, 3);
    let mut net = Network::<f64>::new(cfg, seed).unwrap();
    let mut rng = rng_for(seed, &[1]);
    // move biases off zero so the head sees varied activations
    for (_, t) in net.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    let batch: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..64).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();

    let pass = net.forward(&batch).unwrap();
    let grads = net.backward(&pass, &labels).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();

    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    for (ti, (name, g)) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti].1[k] += h;
            let mut minus = net.clone();
            minus.tensors_mut()[ti].1[k] -= h;
            let numeric = (loss(&plus, &batch, &labels) - loss(&minus, &batch, &labels)) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            let rel = (a - numeric).abs() / denom;
            if rel > worst.0 {
                worst = (rel, format!("{name}[{k}] analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

#[test]
fn every_parameter_gradient_matches_finite_differences() {
    for seed in 1..=5 {
        let (err, at) = worst_error(seed);
        eprintln!("batch {seed}: worst {err:e} at {at}");
        assert!(err <= 1e-5, "batch {seed}: relative error {err:e} at {at}");
    }
}
