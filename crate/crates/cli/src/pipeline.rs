//! The training and evaluation pipeline behind the subcommands, without file
//! output.

use anyhow::{bail, Context, Result};
use priorgan_core::data::{
    load_csv, load_idx, stratified_split, subsample_imbalanced, synth_blobs, BlobSpec, CsvSchema, Dataset, Normalizer,
};
use priorgan_core::eval::{encode_and_score, ClusterReport};
use priorgan_core::latent::{gaussian, interpolate, linspace01, one_hot_batch};
use priorgan_core::nn::{load_params, Network};
use priorgan_core::seed::{rng_for, Stream};
use priorgan_core::sim_prior::{train_prior, TrainedPrior};
use priorgan_core::simi_gan::{train, EvalSplit, Gan, TrainOutcome};
use priorgan_core::Tensor;
use serde::Serialize;

use crate::config::{RunConfig, Source};

/// Largest pixel value of 8-bit image data.
const PIXEL_MAX: f64 = 255.0;

/// Normalized train/test splits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub normalizer: Normalizer,
    /// Class centers in normalized coordinates, for synthetic data.
    pub centers: Option<Tensor>,
}

/// Loads, subsamples, splits and normalizes the configured dataset.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let d = &config.dataset;
    let mut data_rng = rng_for(config.seed, Stream::Data);
    let (raw, centers) = match &d.source {
        Source::Idx { images, labels } => (load_idx(images, labels.as_deref(), d.classes)?, None),
        Source::Csv { path, label_column } => {
            let schema = CsvSchema {
                label_column: label_column.clone(),
                classes: d.classes,
            };
            (load_csv(path, &schema)?, None)
        }
        Source::Synthetic {
            per_class,
            dim,
            spread,
            noise,
        } => {
            let spec = BlobSpec {
                classes: d.classes,
                per_class: per_class.clone(),
                dim: *dim,
                spread: *spread,
                noise: *noise,
            };
            let blobs = synth_blobs(&spec, &mut data_rng)?;
            (blobs.data, Some(blobs.centers))
        }
    };
    let raw = if d.imbalance.is_identity() {
        raw
    } else {
        subsample_imbalanced(&raw, &d.imbalance, &mut data_rng).context("applying dataset.imbalance")?
    };
    let split = stratified_split(&raw, d.test_fraction, &mut rng_for(config.seed, Stream::Split))?;
    if split.train.len() < 2 || split.test.is_empty() {
        bail!(
            "dataset of {} samples leaves {} for training and {} for testing",
            raw.len(),
            split.train.len(),
            split.test.len()
        );
    }
    let mut train = raw.select(&split.train);
    let mut test = raw.select(&split.test);
    let normalizer = match d.source {
        Source::Idx { .. } => Normalizer::fixed(d.normalization, raw.dim(), 0.0, PIXEL_MAX),
        _ => Normalizer::fit(&train.features, d.normalization, d.scope)?,
    };
    train.features = normalizer.apply(&train.features)?;
    test.features = normalizer.apply(&test.features)?;
    let centers = centers.map(|c| normalizer.apply(&c)).transpose()?;
    Ok(Prepared {
        train,
        test,
        normalizer,
        centers,
    })
}

pub fn fit_prior(config: &RunConfig, data: &Prepared) -> Result<TrainedPrior> {
    Ok(train_prior(
        &config.prior,
        &data.train,
        &mut rng_for(config.seed, Stream::Prior),
    )?)
}

/// A prior network shaped by the config, with parameters from `path`.
pub fn load_prior(config: &RunConfig, data: &Prepared, path: &std::path::Path) -> Result<Network> {
    let spec = config.prior.network_spec(data.train.dim(), config.dataset.classes);
    let mut net = Network::build(spec, &mut rng_for(config.seed, Stream::Prior))?;
    load_params(&mut net, path).with_context(|| {
        format!(
            "prior {} does not fit data width {} with dataset.classes = {} and prior.hidden = {:?}",
            path.display(),
            data.train.dim(),
            config.dataset.classes,
            config.prior.hidden
        )
    })?;
    Ok(net)
}

/// Freshly initialized generator, critic and encoder for the config.
pub fn new_gan(config: &RunConfig, data: &Prepared) -> Result<Gan> {
    Ok(Gan::new(
        &config.gan,
        config.dataset.classes,
        data.train.dim(),
        config.dataset.normalization,
        &mut rng_for(config.seed, Stream::Init),
    )?)
}

/// Trains the networks with per-epoch evaluation on the test split when it
/// is labeled.
pub fn fit_gan(config: &RunConfig, data: &Prepared, prior: Option<&Network>) -> Result<(Gan, TrainOutcome)> {
    let mut gan = new_gan(config, data)?;
    let eval = EvalSplit {
        data: &data.test,
        restarts: config.eval.restarts,
        seed: config.eval.seeds[0],
    };
    let outcome = train(
        &mut gan,
        &config.gan,
        &data.train,
        prior,
        data.test.labels.is_some().then_some(eval),
        &mut rng_for(config.seed, Stream::Gan),
    )?;
    Ok((gan, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedScore {
    pub seed: u64,
    pub acc: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub per_seed: Vec<SeedScore>,
    pub mean_acc: f64,
    pub mean_nmi: f64,
    /// Full report of the first seed.
    pub report: ClusterReport,
}

/// Clusters the encoded test split once per evaluation seed.
pub fn evaluate_encoder(config: &RunConfig, encoder: &Network, test: &Dataset) -> Result<Evaluation> {
    let labels = test.labels().context("evaluation needs a labeled test split")?;
    let mut per_seed = Vec::new();
    let mut first = None;
    for &seed in &config.eval.seeds {
        let r = encode_and_score(
            encoder,
            &test.features,
            labels,
            config.dataset.classes,
            config.eval.restarts,
            &mut rng_for(seed, Stream::Eval),
        )?;
        per_seed.push(SeedScore {
            seed,
            acc: r.acc,
            nmi: r.nmi,
        });
        first.get_or_insert(r);
    }
    let n = per_seed.len() as f64;
    Ok(Evaluation {
        mean_acc: per_seed.iter().map(|s| s.acc).sum::<f64>() / n,
        mean_nmi: per_seed.iter().map(|s| s.nmi).sum::<f64>() / n,
        per_seed,
        report: first.expect("at least one seed"),
    })
}

fn check_class(class: usize, classes: usize) -> Result<()> {
    if class >= classes {
        bail!("class index {class} is out of range for {classes} classes");
    }
    Ok(())
}

/// Continuous codes shared by every class and interpolation frame, so frames
/// and per-class batches line up sample for sample.
fn generation_noise(config: &RunConfig, gan: &Gan, n: usize) -> Result<Tensor> {
    Ok(gaussian(
        &mut rng_for(config.seed, Stream::Generate),
        n,
        gan.continuous_dim(),
        config.gan.sigma,
    )?)
}

/// `n` normalized samples conditioned on `class`.
pub fn generate_class(config: &RunConfig, gan: &Gan, class: usize, n: usize) -> Result<Tensor> {
    check_class(class, gan.classes())?;
    let z_n = generation_noise(config, gan, n)?;
    let z_m = one_hot_batch(&vec![class; n], gan.classes())?;
    Ok(gan.generate(&Tensor::concat_cols(&[&z_n, &z_m])?)?)
}

/// `steps` frames of `n` samples each, moving the categorical code from
/// class `b` (first frame) to class `a` (last frame).
pub fn interpolation_frames(
    config: &RunConfig,
    gan: &Gan,
    a: usize,
    b: usize,
    steps: usize,
    n: usize,
) -> Result<Vec<Tensor>> {
    let m = gan.classes();
    check_class(a, m)?;
    check_class(b, m)?;
    let z_n = generation_noise(config, gan, n)?;
    linspace01(steps)
        .into_iter()
        .map(|tau| {
            let cat = interpolate(&[], a, b, tau, m)?.categorical;
            let rows: Vec<f64> = (0..n).flat_map(|_| cat.iter().copied()).collect();
            let z_m = Tensor::matrix(n, m, rows)?;
            Ok(gan.generate(&Tensor::concat_cols(&[&z_n, &z_m])?)?)
        })
        .collect()
}
