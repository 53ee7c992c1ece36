//! Subcommands: run the pipeline and write artifacts into the output
//! directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use priorgan_core::eval::{encoded_features, project_2d};
use priorgan_core::nn::{load_params, save_params, Network};
use priorgan_core::sim_prior::{assignment_histogram, trace_csv};
use priorgan_core::simi_gan::{history_csv, Gan, LossToggles};
use priorgan_core::Tensor;

use crate::config::RunConfig;
use crate::pgm;
use crate::pipeline::{
    evaluate_encoder, fit_gan, fit_prior, generate_class, interpolation_frames, load_prior, new_gan, prepare, Prepared,
};

pub const PRIOR_PARAMS: &str = "prior.params";
pub const GENERATOR_PARAMS: &str = "generator.params";
pub const DISCRIMINATOR_PARAMS: &str = "discriminator.params";
pub const ENCODER_PARAMS: &str = "encoder.params";

fn write(path: PathBuf, contents: impl AsRef<[u8]>, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn save(net: &Network, path: PathBuf, written: &mut Vec<PathBuf>) -> Result<()> {
    save_params(net, &path)?;
    written.push(path);
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Trains the prior on the training split.
pub fn train_prior(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = vec![config.write_resolved()?];
    let data = prepare(config)?;
    let trained = fit_prior(config, &data)?;
    save(&trained.net, config.artifact(PRIOR_PARAMS), &mut written)?;
    write(
        config.artifact("prior_trace.csv"),
        trace_csv(&trained.trace),
        &mut written,
    )?;
    let mut hist = String::from("class,count\n");
    for (k, c) in assignment_histogram(&trained.net, &data.train.features)?
        .iter()
        .enumerate()
    {
        writeln!(hist, "{k},{c}")?;
    }
    write(config.artifact("prior_histogram.csv"), hist, &mut written)?;
    Ok(written)
}

/// Flags of `train-gan` folded into the config before it is resolved.
#[derive(Debug, Clone, Default)]
pub struct GanOverrides {
    pub prior: Option<PathBuf>,
    pub uniform_prior: bool,
    pub losses: Option<LossToggles>,
}

impl GanOverrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(p) = &self.prior {
            config.prior_params = Some(p.clone());
        }
        if self.uniform_prior {
            config.gan.uniform_prior = true;
        }
        if let Some(l) = self.losses {
            config.gan.losses = l;
        }
        if config.gan.uniform_prior {
            config.prior_params = None;
        } else if config.prior_params.is_none() {
            config.prior_params = Some(config.artifact(PRIOR_PARAMS));
        }
    }
}

/// Trains generator, critic and encoder; writes the four parameter files,
/// per-epoch metrics and the final clustering report.
pub fn train_gan(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let mut written = vec![config.write_resolved()?];
    let data = prepare(config)?;
    let prior = match (&config.prior_params, config.gan.uniform_prior) {
        (Some(path), false) => Some(load_prior(config, &data, path)?),
        _ => None,
    };
    let (gan, outcome) = fit_gan(config, &data, prior.as_ref())?;
    save(&gan.generator, config.artifact(GENERATOR_PARAMS), &mut written)?;
    save(&gan.discriminator, config.artifact(DISCRIMINATOR_PARAMS), &mut written)?;
    save(&gan.encoder, config.artifact(ENCODER_PARAMS), &mut written)?;
    if let Some(p) = &prior {
        save(p, config.artifact(PRIOR_PARAMS), &mut written)?;
    }
    write(
        config.artifact("metrics.csv"),
        history_csv(&outcome.history),
        &mut written,
    )?;
    let report = serde_json::to_string_pretty(&outcome.final_report)?;
    write(config.artifact("report.json"), report, &mut written)?;
    Ok(written)
}

/// Generator and encoder from parameter files, shaped by the config.
fn load_gan(config: &RunConfig, data: &Prepared, generator: Option<&Path>, encoder: Option<&Path>) -> Result<Gan> {
    let mut gan = new_gan(config, data)?;
    if let Some(p) = generator {
        load_params(&mut gan.generator, p).with_context(|| generator_context(config, data, p))?;
    }
    if let Some(p) = encoder {
        load_params(&mut gan.encoder, p).with_context(|| generator_context(config, data, p))?;
    }
    Ok(gan)
}

fn generator_context(config: &RunConfig, data: &Prepared, path: &Path) -> String {
    format!(
        "{} does not fit data width {} with gan.continuous_dim = {}, dataset.classes = {} and gan.hidden = {:?}",
        path.display(),
        data.train.dim(),
        config.gan.continuous_dim,
        config.dataset.classes,
        config.gan.hidden
    )
}

/// Scores the encoder on the test split for every evaluation seed and
/// exports a 2-D projection of its codes.
pub fn evaluate(config: &RunConfig, encoder: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut written = vec![config.write_resolved()?];
    let data = prepare(config)?;
    let path = encoder.map_or_else(|| config.artifact(ENCODER_PARAMS), Path::to_path_buf);
    let gan = load_gan(config, &data, None, Some(&path))?;
    let eval = evaluate_encoder(config, &gan.encoder, &data.test)?;
    write(
        config.artifact("evaluation.json"),
        serde_json::to_string_pretty(&eval)?,
        &mut written,
    )?;

    let mut csv = String::from("seed,acc,nmi\n");
    for s in &eval.per_seed {
        writeln!(csv, "{},{},{}", s.seed, s.acc, s.nmi)?;
    }
    writeln!(csv, "mean,{},{}", eval.mean_acc, eval.mean_nmi)?;
    write(config.artifact("evaluation.csv"), csv, &mut written)?;

    let coords = project_2d(&encoded_features(&gan.encoder, &data.test.features)?)?;
    let truth = data.test.labels()?;
    let mut csv = String::from("x,y,true_label,pred_label\n");
    for (i, (t, p)) in truth.iter().zip(&eval.report.predicted_labels).enumerate() {
        writeln!(csv, "{},{},{t},{p}", coords.get(i, 0), coords.get(i, 1))?;
    }
    write(config.artifact("projection.csv"), csv, &mut written)?;
    Ok(written)
}

/// Writes one batch: a P5 grid for image data, otherwise CSV in the original
/// feature scale.
fn write_batch(data: &Prepared, samples: &Tensor, stem: PathBuf, written: &mut Vec<PathBuf>) -> Result<()> {
    let raw = data.normalizer.invert(samples)?;
    match data.train.image_shape {
        Some((h, w)) => {
            let (gw, gh, pixels) = pgm::grid(&raw, h, w)?;
            let path = stem.with_extension("pgm");
            pgm::write(&path, gw, gh, &pixels)?;
            written.push(path);
        }
        None => {
            let mut csv = (0..raw.cols()).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
            csv.push('\n');
            for i in 0..raw.rows() {
                let row: Vec<String> = raw.row(i).iter().map(f64::to_string).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            write(stem.with_extension("csv"), csv, written)?;
        }
    }
    Ok(())
}

/// `per_class` samples for each requested class (all classes when `classes`
/// is empty), one file per class under `generated/`.
pub fn generate(
    config: &RunConfig,
    generator: Option<&Path>,
    per_class: usize,
    classes: &[usize],
) -> Result<Vec<PathBuf>> {
    let mut written = vec![config.write_resolved()?];
    let data = prepare(config)?;
    let path = generator.map_or_else(|| config.artifact(GENERATOR_PARAMS), Path::to_path_buf);
    let gan = load_gan(config, &data, Some(&path), None)?;
    let all: Vec<usize> = (0..config.dataset.classes).collect();
    let classes = if classes.is_empty() { &all[..] } else { classes };
    let dir = config.artifact("generated");
    create_dir(&dir)?;
    for &k in classes {
        let samples = generate_class(config, &gan, k, per_class)?;
        write_batch(&data, &samples, dir.join(format!("class_{k}")), &mut written)?;
    }
    Ok(written)
}

/// `steps` frames from class `b` to class `a` under `interpolation/`.
pub fn interpolate(
    config: &RunConfig,
    generator: Option<&Path>,
    a: usize,
    b: usize,
    steps: usize,
    samples: usize,
) -> Result<Vec<PathBuf>> {
    let mut written = vec![config.write_resolved()?];
    let data = prepare(config)?;
    let path = generator.map_or_else(|| config.artifact(GENERATOR_PARAMS), Path::to_path_buf);
    let gan = load_gan(config, &data, Some(&path), None)?;
    let frames = interpolation_frames(config, &gan, a, b, steps, samples)?;
    let dir = config.artifact("interpolation");
    create_dir(&dir)?;
    let width = steps.saturating_sub(1).to_string().len();
    for (i, f) in frames.iter().enumerate() {
        write_batch(&data, f, dir.join(format!("frame_{i:0width$}")), &mut written)?;
    }
    Ok(written)
}
