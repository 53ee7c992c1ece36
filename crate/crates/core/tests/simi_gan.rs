use priorgan_core::data::{synth_blobs, BlobSpec, Dataset, NormMode, NormScope, Normalizer};
use priorgan_core::latent::{gaussian, sample_latent, ClassSource, LatentBatch};
use priorgan_core::nn::{Network, NetworkSpec};
use priorgan_core::seed::{rng_for, Stream};
use priorgan_core::simi_gan::{
    composite_loss, loss_ce, loss_mse, loss_pce, train, train_step, Composite, EvalSplit, Gan, LossToggles, StepReport,
    Term, TrainConfig,
};
use priorgan_core::{Error, Tape, Tensor, Var};

const CLASSES: usize = 3;

fn blobs(seed: u64, per_class: usize) -> Dataset {
    let spec = BlobSpec {
        classes: CLASSES,
        per_class: vec![per_class],
        dim: 2,
        spread: 10.0,
        noise: 1.0,
    };
    let b = synth_blobs(&spec, &mut rng_for(seed, Stream::Data)).unwrap();
    let norm = Normalizer::fit(&b.data.features, NormMode::Signed, NormScope::PerFeature).unwrap();
    let mut data = b.data;
    data.features = norm.apply(&data.features).unwrap();
    data
}

fn small_config() -> TrainConfig {
    TrainConfig {
        hidden: vec![12],
        continuous_dim: 2,
        batch: 10,
        epochs: 2,
        lr: 1e-3,
        ..TrainConfig::default()
    }
}

fn gan(config: &TrainConfig, seed: u64) -> Gan {
    Gan::new(config, CLASSES, 2, NormMode::Signed, &mut rng_for(seed, Stream::Init)).unwrap()
}

fn prior(seed: u64) -> Network {
    Network::build(NetworkSpec::mlp(2, &[8], CLASSES), &mut rng_for(seed, Stream::Prior)).unwrap()
}

struct Batch {
    x: Tensor,
    z: LatentBatch,
    fresh: Tensor,
}

fn batch(config: &TrainConfig, seed: u64) -> Batch {
    let x = blobs(seed, 4).features;
    let mut rng = rng_for(seed, Stream::Gan);
    let classes: Vec<usize> = (0..x.rows()).map(|i| i % CLASSES).collect();
    let z = sample_latent(
        &mut rng,
        x.rows(),
        config.continuous_dim,
        CLASSES,
        config.sigma,
        ClassSource::Fixed(&classes),
    )
    .unwrap();
    let fresh = gaussian(&mut rng, x.rows(), config.continuous_dim, config.sigma).unwrap();
    Batch { x, z, fresh }
}

fn composite(g: &Gan, config: &TrainConfig, seed: u64) -> Composite {
    let b = batch(config, seed);
    composite_loss(g, config, &b.x, &b.z, &b.fresh).unwrap()
}

fn grads(c: &Composite, loss: &Var, wrt: &[Var]) -> Vec<Tensor> {
    c.tape.gradients(loss, wrt).unwrap()
}

fn max_abs_diff(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn accumulate(acc: &mut [Tensor], add: &[Tensor], w: f64) {
    for (a, b) in acc.iter_mut().zip(add) {
        *a = a.zip_with(b, "accumulate", |p, q| p + w * q).unwrap();
    }
}

#[test]
fn total_gradient_is_the_weighted_sum_of_term_gradients() {
    let config = TrainConfig {
        alpha_cl: 1.5,
        alpha_mse: 2.5,
        alpha_re: 0.7,
        alpha_pcl: 3.0,
        alpha_cm: 1.3,
        ..small_config()
    };
    let g = gan(&config, 1);
    let c = composite(&g, &config, 1);
    assert_eq!(c.terms.len(), 5);
    for (name, wrt) in [("generator", c.generator.vars()), ("encoder", c.encoder.vars())] {
        let total = grads(&c, &c.total, wrt);
        let mut sum = grads(&c, &c.adversarial, wrt);
        for (term, j) in &c.terms {
            accumulate(&mut sum, &grads(&c, j, wrt), config.weight(*term));
        }
        let diff = max_abs_diff(&total, &sum);
        assert!(diff < 1e-9, "{name}: {diff:e}");
    }
}

/// Each term from plain forward passes and the standalone loss functions.
fn recomputed_terms(g: &Gan, b: &Batch) -> (f64, Vec<(Term, f64)>) {
    let tape = Tape::new();
    let k = |t: &Tensor| tape.constant(t.clone());
    let x_g = g.generate(&b.z.concat().unwrap()).unwrap();
    let adv = -g.discriminator.predict(&x_g).unwrap().sum() / x_g.rows() as f64;
    let dn = g.continuous_dim();
    let on_fake = g.encoder.predict(&x_g).unwrap();
    let on_real = g.encoder.predict(&b.x).unwrap();
    let fake_logits = on_fake.slice_cols(dn, dn + CLASSES).unwrap();
    let real_logits = on_real.slice_cols(dn, dn + CLASSES).unwrap();
    let real_code = Tensor::concat_cols(&[
        &on_real.slice_cols(0, dn).unwrap(),
        &real_logits.softmax_rows().unwrap(),
    ])
    .unwrap();
    let cross = Tensor::concat_cols(&[&b.fresh, &real_logits.softmax_rows().unwrap()]).unwrap();
    let v = |r: priorgan_core::Result<Var>| r.unwrap().item().unwrap();
    let terms = vec![
        (Term::Ce, v(loss_ce(&b.z.categorical, &k(&fake_logits)))),
        (
            Term::Mse,
            v(loss_mse(&k(&on_fake.slice_cols(0, dn).unwrap()), &k(&b.z.continuous))),
        ),
        (Term::Rec, v(loss_mse(&k(&g.generate(&real_code).unwrap()), &k(&b.x)))),
        (Term::Cm, v(loss_mse(&k(&x_g), &k(&g.generate(&cross).unwrap())))),
        (Term::Pce, v(loss_pce(&b.z.categorical, &k(&real_logits)))),
    ];
    (adv, terms)
}

#[test]
fn total_loss_is_the_weighted_sum_of_recomputed_terms() {
    let config = TrainConfig {
        alpha_cl: 1.5,
        alpha_mse: 2.5,
        alpha_re: 0.7,
        alpha_pcl: 3.0,
        alpha_cm: 1.3,
        ..small_config()
    };
    let g = gan(&config, 14);
    let b = batch(&config, 14);
    let c = composite_loss(&g, &config, &b.x, &b.z, &b.fresh).unwrap();
    let (adv, terms) = recomputed_terms(&g, &b);
    assert!((c.adversarial.item().unwrap() - adv).abs() < 1e-9);
    let mut g_total = adv;
    let mut e_total = 0.0;
    for (term, j) in &terms {
        let (_, graph) = c.terms.iter().find(|(t, _)| t == term).unwrap();
        assert!((graph.item().unwrap() - j).abs() < 1e-9, "{term:?}");
        e_total += config.weight(*term) * j;
        if *term != Term::Pce {
            g_total += config.weight(*term) * j;
        }
    }
    // E's objective plus the adversarial term is the shared graph total.
    assert!((c.total.item().unwrap() - (adv + e_total)).abs() < 1e-9);

    // G's objective is the same total without the prior-bounded term.
    let (_, pce) = c.terms.iter().find(|(t, _)| *t == Term::Pce).unwrap();
    let g_graph = c.total.item().unwrap() - config.weight(Term::Pce) * pce.item().unwrap();
    assert!((g_graph - g_total).abs() < 1e-9);
}

#[test]
fn prior_term_never_reaches_the_generator() {
    let config = small_config();
    let g = gan(&config, 2);
    let c = composite(&g, &config, 2);
    let (_, pce) = c.terms.iter().find(|(t, _)| *t == Term::Pce).unwrap();
    let g_pce = grads(&c, pce, c.generator.vars());
    assert!(g_pce.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
    let e_pce = grads(&c, pce, c.encoder.vars());
    assert!(e_pce.iter().any(|t| t.data().iter().any(|v| *v != 0.0)));

    // Adversarial term: generator only.
    let e_adv = grads(&c, &c.adversarial, c.encoder.vars());
    assert!(e_adv.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));

    // Toggling the prior term leaves the generator's gradient untouched.
    let off = TrainConfig {
        losses: LossToggles {
            pce: false,
            ..LossToggles::default()
        },
        ..config.clone()
    };
    let c_off = composite(&g, &off, 2);
    let on = grads(&c, &c.total, c.generator.vars());
    let without = grads(&c_off, &c_off.total, c_off.generator.vars());
    assert_eq!(max_abs_diff(&on, &without), 0.0);
}

#[test]
fn literal_sign_flips_only_the_adversarial_term() {
    let config = small_config();
    let strict = TrainConfig {
        literal_generator_sign: true,
        ..config.clone()
    };
    let g = gan(&config, 3);
    let a = composite(&g, &config, 3);
    let b = composite(&g, &strict, 3);
    assert_eq!(a.adversarial.item().unwrap(), -b.adversarial.item().unwrap());
    for ((_, x), (_, y)) in a.terms.iter().zip(&b.terms) {
        assert_eq!(x.item().unwrap(), y.item().unwrap());
    }
}

fn run(config: &TrainConfig, seed: u64) -> (Gan, Vec<StepReport>) {
    let data = blobs(seed, 20);
    let p = prior(seed);
    let mut g = gan(config, seed);
    let out = train(&mut g, config, &data, Some(&p), None, &mut rng_for(seed, Stream::Gan)).unwrap();
    (g, out.history.iter().map(|r| r.losses).collect())
}

fn checksums(g: &Gan) -> [u64; 3] {
    [
        g.generator.params().checksum(),
        g.discriminator.params().checksum(),
        g.encoder.params().checksum(),
    ]
}

#[test]
fn disabling_a_term_equals_zeroing_its_weight() {
    let base = small_config();
    for (toggles, zeroed) in [
        (
            LossToggles {
                cm: false,
                ..LossToggles::default()
            },
            TrainConfig {
                alpha_cm: 0.0,
                ..base.clone()
            },
        ),
        (
            LossToggles {
                pce: false,
                ..LossToggles::default()
            },
            TrainConfig {
                alpha_pcl: 0.0,
                ..base.clone()
            },
        ),
        (
            LossToggles {
                rec: false,
                ce: false,
                ..LossToggles::default()
            },
            TrainConfig {
                alpha_re: 0.0,
                alpha_cl: 0.0,
                ..base.clone()
            },
        ),
    ] {
        let toggled = TrainConfig {
            losses: toggles,
            ..base.clone()
        };
        let (a, _) = run(&toggled, 4);
        let (b, _) = run(&zeroed, 4);
        for ((n, x), (_, y)) in a.generator.params().iter().zip(b.generator.params().iter()) {
            assert_eq!(x, y, "generator {n}");
        }
        assert_eq!(checksums(&a), checksums(&b));
    }
}

#[test]
fn same_seed_same_run() {
    let config = small_config();
    let (a, ha) = run(&config, 5);
    let (b, hb) = run(&config, 5);
    assert_eq!(ha, hb);
    assert_eq!(checksums(&a), checksums(&b));
    let (c, _) = run(&config, 6);
    assert_ne!(checksums(&a), checksums(&c));
}

#[test]
fn training_leaves_the_prior_untouched() {
    let config = small_config();
    let data = blobs(7, 20);
    let p = prior(7);
    let before = p.params().checksum();
    let mut g = gan(&config, 7);
    train(&mut g, &config, &data, Some(&p), None, &mut rng_for(7, Stream::Gan)).unwrap();
    assert_eq!(p.params().checksum(), before);
}

#[test]
fn zero_epochs_changes_nothing() {
    let config = TrainConfig {
        epochs: 0,
        ..small_config()
    };
    let data = blobs(8, 10);
    let mut g = gan(&config, 8);
    let before = checksums(&g);
    let out = train(
        &mut g,
        &config,
        &data,
        Some(&prior(8)),
        None,
        &mut rng_for(8, Stream::Gan),
    )
    .unwrap();
    assert!(out.history.is_empty());
    assert!(out.final_report.is_none());
    assert_eq!(checksums(&g), before);
}

#[test]
fn encoder_is_frozen_without_encoder_terms() {
    let config = TrainConfig {
        losses: LossToggles::none(),
        ..small_config()
    };
    let data = blobs(9, 10);
    let mut g = gan(&config, 9);
    let before = checksums(&g);
    train(
        &mut g,
        &config,
        &data,
        Some(&prior(9)),
        None,
        &mut rng_for(9, Stream::Gan),
    )
    .unwrap();
    let after = checksums(&g);
    assert_ne!(after[0], before[0]);
    assert_ne!(after[1], before[1]);
    assert_eq!(after[2], before[2]);
}

#[test]
fn uniform_prior_runs_without_a_prior_network() {
    let config = TrainConfig {
        uniform_prior: true,
        ..small_config()
    };
    let data = blobs(10, 20);
    let mut g = gan(&config, 10);
    let split = EvalSplit {
        data: &data,
        restarts: 2,
        seed: 0,
    };
    let out = train(&mut g, &config, &data, None, Some(split), &mut rng_for(10, Stream::Gan)).unwrap();
    assert_eq!(out.history.len(), 2);
    for row in &out.history {
        assert_eq!(row.losses.j_pce, 0.0);
        assert!(row.losses.is_finite());
        assert!(row.acc.is_some());
    }
    let r = out.final_report.unwrap();
    assert_eq!(r.predicted_labels.len(), data.len());
}

#[test]
fn learned_prior_is_required_unless_uniform() {
    let config = small_config();
    let data = blobs(11, 10);
    let mut g = gan(&config, 11);
    let err = train(&mut g, &config, &data, None, None, &mut rng_for(11, Stream::Gan)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");

    let wrong = Network::build(NetworkSpec::mlp(2, &[4], CLASSES + 1), &mut rng_for(0, Stream::Prior)).unwrap();
    let err = train(
        &mut g,
        &config,
        &data,
        Some(&wrong),
        None,
        &mut rng_for(11, Stream::Gan),
    )
    .unwrap_err();
    assert!(err.to_string().contains("classes"), "{err}");
}

#[test]
fn non_finite_batch_reports_its_losses() {
    let config = small_config();
    let mut g = gan(&config, 12);
    let x = Tensor::from_rows(&[[f64::NAN, 0.0], [0.1, 0.2], [0.3, -0.4]]).unwrap();
    let err = train_step(&mut g, &config, &x, Some(&[0, 1, 2]), &mut rng_for(12, Stream::Gan)).unwrap_err();
    match err {
        Error::NonFinite { report } => assert!(report.d.is_nan()),
        other => panic!("expected a non-finite error, got {other}"),
    }
}

#[test]
fn one_row_batches_are_rejected() {
    let config = small_config();
    let mut g = gan(&config, 13);
    let x = Tensor::from_rows(&[[0.1, 0.2]]).unwrap();
    assert!(train_step(&mut g, &config, &x, Some(&[0]), &mut rng_for(13, Stream::Gan)).is_err());
}
