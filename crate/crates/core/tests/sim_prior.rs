use priorgan_core::data::{synth_blobs, BlobSpec, Dataset, NormMode, NormScope, Normalizer};
use priorgan_core::eval::hungarian_acc;
use priorgan_core::latent::prior_assignments;
use priorgan_core::nn::{Network, NetworkSpec, ParamSet};
use priorgan_core::seed::{rng_for, Stream};
use priorgan_core::sim_prior::{
    augment_batch, conditional_entropy, marginal_entropy, objective, sat_loss, train_prior, vat_perturbation,
    Augmentation, PriorConfig,
};
use priorgan_core::{Tape, Tensor};
use rand::Rng;

fn random_batch(seed: u64, n: usize, d: usize) -> Tensor {
    let mut rng = rng_for(seed, Stream::Data);
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn brute_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v != 0.0 {
            h -= v * v.ln();
        }
    }
    h
}

#[test]
fn entropies_match_brute_force_summation() {
    let mut rng = rng_for(5, Stream::Prior);
    for _ in 0..200 {
        let n = rng.random_range(1..20);
        let m = rng.random_range(1..8);
        let logits = Tensor::matrix(n, m, (0..n * m).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap();
        let p = logits.softmax_rows().unwrap();
        let mut cond = 0.0;
        let mut mean = vec![0.0; m];
        for i in 0..n {
            cond += brute_entropy(p.row(i));
            for k in 0..m {
                mean[k] += p.get(i, k);
            }
        }
        let mean: Vec<f64> = mean.iter().map(|v| v / n as f64).collect();
        assert!((conditional_entropy(&p).unwrap() - cond / n as f64).abs() < 1e-9);
        assert!((marginal_entropy(&p).unwrap() - brute_entropy(&mean)).abs() < 1e-9);
        let ln_m = (m as f64).ln();
        assert!(marginal_entropy(&p).unwrap() <= ln_m + 1e-12);
        assert!(conditional_entropy(&p).unwrap() <= ln_m + 1e-12);
    }
}

fn logistic(w: [[f64; 2]; 3], b: [f64; 2]) -> Network {
    let params = ParamSet::new(vec![
        ("layer0.weight".into(), Tensor::from_rows(&w).unwrap()),
        ("layer0.bias".into(), Tensor::from_rows(&[b]).unwrap()),
    ])
    .unwrap();
    Network::from_params(NetworkSpec::mlp(3, &[], 2), params).unwrap()
}

#[test]
fn vat_direction_matches_exhaustive_search_on_logistic_regression() {
    let net = logistic([[1.0, -0.5], [0.3, 0.8], [-2.0, 0.1]], [0.2, -0.1]);
    let diff = [-1.5, 0.5, 2.1];
    let diff_norm = diff.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
    let x = Tensor::from_rows(&[[0.1, 0.2, -0.1]]).unwrap();
    let beta_t = 0.25;

    let r = vat_perturbation(&net, &x, beta_t, 1e-6, &mut rng_for(0, Stream::Prior)).unwrap();
    let cos = r.row(0).iter().zip(diff).map(|(a, b)| a * b).sum::<f64>() / (beta_t * diff_norm);
    assert!(cos.abs() > 1.0 - 1e-6, "cos {cos}");

    let mut rng = rng_for(1, Stream::Prior);
    let mut best = (f64::NEG_INFINITY, vec![0.0; 3]);
    for _ in 0..10_000 {
        let mut u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= n);
        let x_aug = Tensor::from_rows(&[[0.1 + beta_t * u[0], 0.2 + beta_t * u[1], -0.1 + beta_t * u[2]]]).unwrap();
        let loss = sat_loss(&net, &x, &x_aug).unwrap();
        if loss > best.0 {
            best = (loss, u);
        }
    }
    let best_cos = best.1.iter().zip(diff).map(|(a, b)| a * b).sum::<f64>() / diff_norm;
    assert!(best_cos.abs() > 0.99, "{best_cos}");
    // The searched optimum and the power-iteration direction agree up to sign.
    let agree = r.row(0).iter().zip(&best.1).map(|(a, b)| a * b).sum::<f64>() / beta_t;
    assert!(agree.abs() > 0.99);
}

#[test]
fn objective_matches_independent_recomputation() {
    let net = Network::build(NetworkSpec::mlp(4, &[16, 16], 3), &mut rng_for(2, Stream::Init)).unwrap();
    let x = random_batch(3, 32, 4);
    for aug in [Augmentation::None, Augmentation::Vat] {
        let config = PriorConfig {
            augmentation: aug,
            ..PriorConfig::default()
        };
        let views = augment_batch(&net, &x, &config, None, &mut rng_for(4, Stream::Prior)).unwrap();
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let (_, terms) = objective(&net, &tape, &bound, &x, &views, &config).unwrap();

        let probs = net.predict(&x).unwrap().softmax_rows().unwrap();
        let rsat = sat_loss(&net, &x, views.first().unwrap_or(&x)).unwrap();
        let h_y = marginal_entropy(&probs).unwrap();
        let h_yx = conditional_entropy(&probs).unwrap();
        let expected = rsat - config.beta_p * (h_y - config.beta_mu * h_yx);
        assert!((terms.total - expected).abs() < 1e-9);
        assert!((terms.rsat - rsat).abs() < 1e-9);

        // Permuting the batch leaves every term unchanged.
        let perm: Vec<usize> = (0..32).rev().collect();
        let views_p: Vec<Tensor> = views.iter().map(|v| v.select_rows(&perm)).collect();
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let (_, permuted) = objective(&net, &tape, &bound, &x.select_rows(&perm), &views_p, &config).unwrap();
        for (a, b) in [
            (terms.total, permuted.total),
            (terms.rsat, permuted.rsat),
            (terms.h_y, permuted.h_y),
            (terms.h_y_given_x, permuted.h_y_given_x),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn three_blobs(seed: u64) -> Dataset {
    let spec = BlobSpec {
        classes: 3,
        per_class: vec![200],
        dim: 2,
        spread: 20.0,
        noise: 1.0,
    };
    let blobs = synth_blobs(&spec, &mut rng_for(seed, Stream::Data)).unwrap();
    let norm = Normalizer::fit(&blobs.data.features, NormMode::Signed, NormScope::PerFeature).unwrap();
    let mut data = blobs.data;
    data.features = norm.apply(&data.features).unwrap();
    data
}

/// `R - 0.1 (4 H(Y) - H(Y|X))` written as `R - beta_p (H(Y) - beta_mu H(Y|X))`.
fn marginal_weighted() -> PriorConfig {
    PriorConfig {
        beta_p: 0.4,
        beta_mu: 0.25,
        ..PriorConfig::default()
    }
}

#[test]
fn vat_prior_separates_blobs() {
    for seed in 0..3 {
        let data = three_blobs(seed);
        let prior = train_prior(&marginal_weighted(), &data, &mut rng_for(seed, Stream::Prior)).unwrap();
        let pred = prior_assignments(&prior.net, &data.features).unwrap();
        let (acc, _) = hungarian_acc(data.labels().unwrap(), &pred, 3).unwrap();
        assert!(acc >= 0.95, "seed {seed}: acc {acc}");
    }
}

#[test]
fn zero_beta_p_without_augmentation_never_increases_the_loss() {
    let data = three_blobs(1);
    let config = PriorConfig {
        beta_p: 0.0,
        augmentation: Augmentation::None,
        epochs: 5,
        batch: 600,
        hidden: vec![32],
        ..PriorConfig::default()
    };
    let prior = train_prior(&config, &data, &mut rng_for(1, Stream::Prior)).unwrap();
    for w in prior.trace.windows(2) {
        assert!(w[1].total <= w[0].total + 1e-12);
        assert!((w[1].total - w[1].rsat).abs() < 1e-15);
    }
}
