//! Phase 1: learn a categorical prior `P(y|x)` by regularized information
//! maximization with self-augmented consistency, either adversarial (VAT),
//! affine, or both.

mod augment;
mod entropy;

use priorgan_autodiff::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{param_grads, Adam, AdamConfig, Bound, Network, NetworkSpec};

pub use augment::{affine_augment, Affine, AffineParams};
pub use entropy::{conditional_entropy, conditional_entropy_var, entropy, marginal_entropy, marginal_entropy_var};

/// Self-augmentation used by the consistency term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    /// `x_aug = x`; the consistency term has zero gradient.
    None,
    Affine,
    Vat,
    /// Affine and VAT terms summed with equal weight.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub beta_p: f64,
    pub beta_mu: f64,
    /// VAT perturbation radius.
    pub beta_t: f64,
    /// VAT finite-difference probe step.
    pub xi: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub augmentation: Augmentation,
    pub affine: AffineParams,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            beta_p: 0.1,
            beta_mu: 4.0,
            beta_t: 0.25,
            xi: 1e-6,
            epochs: 60,
            batch: 256,
            lr: 0.002,
            hidden: vec![256, 256],
            augmentation: Augmentation::Vat,
            affine: AffineParams::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("prior.{field} {why}")));
        if !(self.beta_t > 0.0) {
            return bad("beta_t", "must be > 0");
        }
        if !(self.beta_p >= 0.0) {
            return bad("beta_p", "must be >= 0");
        }
        if !(self.beta_mu >= 0.0) {
            return bad("beta_mu", "must be >= 0");
        }
        if !(self.xi > 0.0) {
            return bad("xi", "must be > 0");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch == 0 {
            return bad("batch", "must be >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "widths must be >= 1");
        }
        Ok(())
    }

    pub fn network_spec(&self, input: usize, classes: usize) -> NetworkSpec {
        NetworkSpec::mlp(input, &self.hidden, classes)
    }
}

/// Batch-mean cross-entropy of `softmax(logits_aug)` against fixed targets.
pub fn sat_term(target: &Tensor, logits_aug: &Var) -> Result<Var> {
    let n = logits_aug.shape()[0] as f64;
    Ok(logits_aug.log_softmax()?.mul_const(target)?.sum()?.scale(-1.0 / n))
}

/// Consistency loss between predictions on `x` (held fixed) and on `x_aug`.
pub fn sat_loss(net: &Network, x: &Tensor, x_aug: &Tensor) -> Result<f64> {
    if x.shape() != x_aug.shape() {
        return Err(Error::contract(format!(
            "sat_loss batches differ: {:?} vs {:?}",
            x.shape(),
            x_aug.shape()
        )));
    }
    let target = net.predict(x)?.softmax_rows()?;
    let log_aug = net.predict(x_aug)?.log_softmax_rows()?;
    let n = x.rows() as f64;
    Ok(-target.zip_with(&log_aug, "sat_loss", |p, l| p * l)?.sum() / n)
}

fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    let mut data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    for row in data.chunks_mut(d.max(1)) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        } else if let Some(first) = row.first_mut() {
            *first = 1.0;
        }
    }
    Tensor::matrix(n, d, data).expect("shape by construction")
}

/// Adversarial perturbation of L2 norm `beta_t` per sample, from one power
/// iteration started at a random unit direction. Rows whose gradient vanishes
/// keep the random direction.
pub fn vat_perturbation(net: &Network, x: &Tensor, beta_t: f64, xi: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !(xi > 0.0) {
        return Err(Error::contract(format!("VAT probe step must be > 0, got {xi}")));
    }
    let (n, d) = x.dims2("vat_perturbation")?;
    let start = random_unit_rows(rng, n, d);
    let target = net.predict(x)?.softmax_rows()?;
    let tape = Tape::new();
    let bound = net.bind(&tape, false);
    let dir = tape.leaf(start.clone());
    let probe = tape.constant(x.clone()).add(&dir.scale(xi))?;
    let loss = sat_term(&target, &net.forward(&bound, &probe)?)?;
    let grad = tape.gradients(&loss, &[dir])?.remove(0);

    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let g = grad.row(i);
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            out.extend(g.iter().map(|v| beta_t * v / norm));
        } else {
            out.extend(start.row(i).iter().map(|v| beta_t * v));
        }
    }
    Ok(Tensor::matrix(n, d, out)?)
}

/// Values of the objective's terms on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    pub total: f64,
    pub rsat: f64,
    pub h_y: f64,
    pub h_y_given_x: f64,
}

/// `R_sat - beta_p * (H(Y) - beta_mu * H(Y|X))` on one batch, to be
/// minimized. `augmented` holds the augmented views of `x`; when empty the
/// consistency term compares `x` with itself.
pub fn objective(
    net: &Network,
    tape: &Tape,
    bound: &Bound,
    x: &Tensor,
    augmented: &[Tensor],
    config: &PriorConfig,
) -> Result<(Var, ObjectiveTerms)> {
    let logits = net.forward(bound, &tape.constant(x.clone()))?;
    let log_probs = logits.log_softmax()?;
    let probs = logits.softmax()?;
    let target = probs.value().clone();
    let rsat = if augmented.is_empty() {
        sat_term(&target, &logits)?
    } else {
        let mut acc: Option<Var> = None;
        for view in augmented {
            let term = sat_term(&target, &net.forward(bound, &tape.constant(view.clone()))?)?;
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
        acc.expect("non-empty")
    };
    let h_y = marginal_entropy_var(&probs)?;
    let h_y_x = conditional_entropy_var(&log_probs)?;
    let info = h_y.sub(&h_y_x.scale(config.beta_mu))?;
    let total = rsat.sub(&info.scale(config.beta_p))?;
    let terms = ObjectiveTerms {
        total: total.item()?,
        rsat: rsat.item()?,
        h_y: h_y.item()?,
        h_y_given_x: h_y_x.item()?,
    };
    Ok((total, terms))
}

/// Augmented views of a batch for the configured scheme.
pub fn augment_batch(
    net: &Network,
    x: &Tensor,
    config: &PriorConfig,
    image: Option<((usize, usize), f64)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Tensor>> {
    let mut views = Vec::new();
    if matches!(config.augmentation, Augmentation::Affine | Augmentation::Both) {
        let (shape, background) =
            image.ok_or_else(|| Error::Config("affine augmentation requires image-shaped data".into()))?;
        views.push(affine_augment(x, shape, &config.affine, background, rng)?);
    }
    if matches!(config.augmentation, Augmentation::Vat | Augmentation::Both) {
        let r = vat_perturbation(net, x, config.beta_t, config.xi, rng)?;
        views.push(x.zip_with(&r, "vat", |a, b| a + b)?);
    }
    Ok(views)
}

/// Per-epoch averages over batches plus the hard-assignment histogram over
/// the whole training set at the end of the epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorTraceRow {
    pub epoch: usize,
    pub total: f64,
    pub rsat: f64,
    pub h_y: f64,
    pub h_y_given_x: f64,
    pub histogram: Vec<usize>,
}

pub fn trace_csv(trace: &[PriorTraceRow]) -> String {
    let classes = trace.first().map_or(0, |r| r.histogram.len());
    let mut out = String::from("epoch,total,rsat,h_y,h_y_given_x");
    for k in 0..classes {
        out.push_str(&format!(",count_{k}"));
    }
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.epoch, r.total, r.rsat, r.h_y, r.h_y_given_x
        ));
        for c in &r.histogram {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

/// Counts of `argmax P(y|x)` per class.
pub fn assignment_histogram(net: &Network, x: &Tensor) -> Result<Vec<usize>> {
    let mut counts = vec![0; net.output_dim()];
    for c in crate::latent::prior_assignments(net, x)? {
        counts[c] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct TrainedPrior {
    pub net: Network,
    pub trace: Vec<PriorTraceRow>,
}

/// Trains a prior with `data.classes` outputs. Labels are never read.
pub fn train_prior(config: &PriorConfig, data: &Dataset, rng: &mut ChaCha8Rng) -> Result<TrainedPrior> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::contract("prior training on an empty dataset"));
    }
    let image = match config.augmentation {
        Augmentation::Affine | Augmentation::Both => {
            let shape = data
                .image_shape
                .ok_or_else(|| Error::Config("affine augmentation requires image-shaped data".into()))?;
            let background = data.features.data().iter().copied().fold(f64::INFINITY, f64::min);
            Some((shape, background))
        }
        _ => None,
    };
    let mut net = Network::build(config.network_spec(data.dim(), data.classes), rng)?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), net.params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut sums = [0.0; 4];
        let mut batches = 0;
        for chunk in order.chunks(config.batch) {
            let x = data.features.select_rows(chunk);
            let views = augment_batch(&net, &x, config, image, rng)?;
            let tape = Tape::new();
            let bound = net.bind(&tape, true);
            let (loss, terms) = objective(&net, &tape, &bound, &x, &views, config)?;
            if !terms.total.is_finite() {
                return Err(Error::contract(format!(
                    "non-finite prior objective at epoch {epoch}: {terms:?}"
                )));
            }
            let grads = param_grads(&net, &tape, &bound, &loss)?;
            adam.step(net.params_mut(), &grads)?;
            for (s, v) in sums
                .iter_mut()
                .zip([terms.total, terms.rsat, terms.h_y, terms.h_y_given_x])
            {
                *s += v;
            }
            batches += 1;
        }
        let b = batches as f64;
        trace.push(PriorTraceRow {
            epoch,
            total: sums[0] / b,
            rsat: sums[1] / b,
            h_y: sums[2] / b,
            h_y_given_x: sums[3] / b,
            histogram: assignment_histogram(&net, &data.features)?,
        });
    }
    Ok(TrainedPrior { net, trace })
}
