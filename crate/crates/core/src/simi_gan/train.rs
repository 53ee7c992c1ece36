use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::step::{train_step, Gan, StepReport};
use super::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{encode_and_score, ClusterReport};
use crate::latent::prior_assignments;
use crate::nn::Network;
use crate::seed::{rng_for, Stream};

/// Held-out split scored after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct EvalSplit<'a> {
    pub data: &'a Dataset,
    pub restarts: usize,
    /// Epoch `e` clusters with a generator derived from `seed + e`.
    pub seed: u64,
}

/// Step reports averaged over an epoch, plus held-out scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub losses: StepReport,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRow>,
    /// Score of the last evaluated epoch.
    pub final_report: Option<ClusterReport>,
}

pub fn evaluate(encoder: &Network, split: &EvalSplit<'_>, epoch: usize) -> Result<ClusterReport> {
    let mut rng = rng_for(split.seed.wrapping_add(epoch as u64), Stream::Eval);
    encode_and_score(
        encoder,
        &split.data.features,
        split.data.labels()?,
        split.data.classes,
        split.restarts,
        &mut rng,
    )
}

/// Runs `config.epochs` passes over `train`. Batches are reshuffled every
/// epoch; a trailing batch with fewer than two rows is skipped.
pub fn train(
    gan: &mut Gan,
    config: &TrainConfig,
    train: &Dataset,
    prior: Option<&Network>,
    eval: Option<EvalSplit<'_>>,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.dim() != gan.data_dim() {
        return Err(Error::contract(format!(
            "data width {} does not match the generator output width {}",
            train.dim(),
            gan.data_dim()
        )));
    }
    let assignments = match (config.uniform_prior, prior) {
        (true, _) => None,
        (false, Some(p)) => {
            if p.input_dim() != train.dim() || p.output_dim() != gan.classes() {
                return Err(Error::contract(format!(
                    "prior network maps {} -> {} but the data has width {} and the latent code {} classes",
                    p.input_dim(),
                    p.output_dim(),
                    train.dim(),
                    gan.classes()
                )));
            }
            Some(prior_assignments(p, &train.features)?)
        }
        (false, None) => {
            return Err(Error::Config(
                "a learned prior is required unless uniform_prior is set".into(),
            ))
        }
    };

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut final_report = None;
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut sums = [0.0; 9];
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch) {
            if chunk.len() < 2 {
                continue;
            }
            let x = train.features.select_rows(chunk);
            let classes: Option<Vec<usize>> = assignments.as_ref().map(|a| chunk.iter().map(|&i| a[i]).collect());
            let report = train_step(gan, config, &x, classes.as_deref(), rng)?;
            for (s, v) in sums.iter_mut().zip(report.values()) {
                *s += v;
            }
            steps += 1;
        }
        let m = |i: usize| if steps == 0 { 0.0 } else { sums[i] / steps as f64 };
        let losses = StepReport {
            d: m(0),
            g: m(1),
            e: m(2),
            j_ce: m(3),
            j_mse: m(4),
            j_rec: m(5),
            j_pce: m(6),
            j_cm: m(7),
            gp: m(8),
        };
        let (acc, nmi) = match &eval {
            Some(split) if split.data.labels.is_some() => {
                let r = evaluate(&gan.encoder, split, epoch)?;
                let scores = (Some(r.acc), Some(r.nmi));
                final_report = Some(r);
                scores
            }
            _ => (None, None),
        };
        history.push(EpochRow {
            epoch,
            losses,
            acc,
            nmi,
        });
    }
    Ok(TrainOutcome { history, final_report })
}

pub const HISTORY_HEADER: &str = "epoch,d_loss,g_loss,e_loss,j_ce,j_mse,j_rec,j_pce,j_cm,gp,acc,nmi";

pub fn history_csv(history: &[EpochRow]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for row in history {
        out.push_str(&row.epoch.to_string());
        for v in row.losses.values() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{},{}\n", opt(row.acc), opt(row.nmi)));
    }
    out
}
