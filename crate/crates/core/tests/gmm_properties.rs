
use hybrid_bn::gmm::{em_fit, regularized_error, DiagonalGmm, EmConfig};
use hybrid_bn::rng::stream;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Row-major draws from a random `dim`-dimensional mixture with random weights.
fn synthetic(seed: u64, m: usize, dim: usize, clusters: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, 0);
    let centers: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(-8.0..8.0)).collect())
        .collect();
    let mut data = Vec::with_capacity(m * dim);
    for _ in 0..m {
        let c = &centers[rng.random_range(0..clusters)];
        for x in c {
            data.push(x + Normal::new(0.0, rng.random_range(0.5..2.0)).unwrap().sample(&mut rng));
        }
    }
    let weights = (0..m).map(|_| rng.random_range(0.1..3.0)).collect();
    (data, weights)
}

fn with_sigma(model: &DiagonalGmm, k: usize, i: usize, sigma: f64) -> DiagonalGmm {
    let mut out = model.clone();
    out.variances[k][i] = sigma * sigma;
    out
}

#[test]
fn single_component_closed_forms() {
    let (data, weights) = synthetic(7, 300, 2, 3);
    let total: f64 = weights.iter().sum();
    let fit = em_fit(&data, 2, &weights, 1, &EmConfig { lambda: 0.0, ..EmConfig::default() }).unwrap();
    for d in 0..2 {
        let mean: f64 = data.chunks(2).zip(&weights).map(|(r, w)| w * r[d]).sum::<f64>() / total;
        let var: f64 = data.chunks(2).zip(&weights).map(|(r, w)| w * (r[d] - mean).powi(2)).sum::<f64>() / total;
        assert!((fit.model.means[0][d] - mean).abs() <= 1e-10);
        assert!((fit.model.variances[0][d] - var).abs() <= 1e-10);
    }
    let ones = vec![1.0; 300];
    let lambda = 4.0;
    let fit = em_fit(&data, 2, &ones, 1, &EmConfig { lambda, ..EmConfig::default() }).unwrap();
    for d in 0..2 {
        let mean: f64 = data.chunks(2).map(|r| r[d]).sum::<f64>() / 300.0;
        let var: f64 = data.chunks(2).map(|r| (r[d] - mean).powi(2)).sum::<f64>() / 300.0;
        assert!((fit.model.variances[0][d] - (var + lambda / 300.0)).abs() <= 1e-10);
    }
}

#[test]
fn monotone_error_and_variance_floor() {
    for seed in 0..20 {
        let dim = 1 + (seed as usize % 3);
        let (data, weights) = synthetic(seed, 400, dim, 1 + seed as usize % 4);
        let total: f64 = weights.iter().sum();
        for lambda in [0.0, 1.0, 10.0] {
            let config = EmConfig { lambda, seed, max_iterations: 200, tolerance: 1e-9 };
            let fit = em_fit(&data, dim, &weights, 3, &config).unwrap();
            for (t, w) in fit.errors.windows(2).enumerate() {
                if !fit.reseed_steps.contains(&(t + 1)) {
                    assert!(w[1] <= w[0] + 1e-9, "seed {seed} lambda {lambda}: {} -> {}", w[0], w[1]);
                }
            }
            for v in fit.model.variances.iter().flatten() {
                assert!(*v >= lambda / total * (1.0 - 1e-12), "seed {seed}: variance {v}");
            }
            let last = *fit.errors.last().unwrap();
            assert!((regularized_error(&fit.model, &data, &weights, lambda) - last).abs() <= 1e-9 * last.abs().max(1.0));
        }
    }
}

#[test]
fn stationary_in_every_standard_deviation() {
    for seed in 0..5 {
        let (data, weights) = synthetic(100 + seed, 250, 2, 2);
        let lambda = 10.0;
        let config = EmConfig { lambda, seed, max_iterations: 20_000, tolerance: 1e-13 };
        let fit = em_fit(&data, 2, &weights, 2, &config).unwrap();
        let model = &fit.model;
        let h = 1e-5;
        for k in 0..model.components() {
            for i in 0..2 {
                let s = model.variances[k][i].sqrt();
                let up = regularized_error(&with_sigma(model, k, i, s + h), &data, &weights, lambda);
                let down = regularized_error(&with_sigma(model, k, i, s - h), &data, &weights, lambda);
                let grad = (up - down) / (2.0 * h);
                assert!(grad.abs() <= 1e-3, "seed {seed} component {k} dim {i}: {grad}");
            }
        }
    }
}

#[test]
fn recovers_two_separated_components() {
    let mut rng = stream(5, 0);
    let data: Vec<f64> = (0..10_000)
        .map(|_| {
            let c = if rng.random_bool(0.5) { -3.0 } else { 3.0 };
            c + Normal::new(0.0, 1.0).unwrap().sample(&mut rng)
        })
        .collect();
    let fit = em_fit(&data, 1, &vec![1.0; 10_000], 2, &EmConfig::default()).unwrap();
    let mut comps: Vec<(f64, f64)> = (0..2).map(|k| (fit.model.means[k][0], fit.model.weights[k])).collect();
    comps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    assert!((comps[0].0 + 3.0).abs() <= 0.15 && (comps[1].0 - 3.0).abs() <= 0.15, "{comps:?}");
    assert!((comps[0].1 - 0.5).abs() <= 0.03, "{comps:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fits_are_valid_mixtures(seed in 0u64..1000, k in 1usize..6, lambda in 0.0f64..20.0) {
        let (data, weights) = synthetic(seed, 120, 2, 2);
        let fit = em_fit(&data, 2, &weights, k, &EmConfig { lambda, seed, ..EmConfig::default() }).unwrap();
        let m = &fit.model;
        prop_assert!(DiagonalGmm::new(m.weights.clone(), m.means.clone(), m.variances.clone()).is_ok());
        prop_assert!(m.components() + fit.dropped == k);
        prop_assert!(fit.errors.iter().all(|e| e.is_finite()));
    }
}
