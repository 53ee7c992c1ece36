use priorgan_autodiff::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::losses::{encoder_code, gradient_penalty, interpolate_rows, loss_ce, loss_cm, loss_mse, loss_pce};
use super::{GanKind, Term, TrainConfig};
use crate::data::NormMode;
use crate::error::{Error, Result};
use crate::latent::{gaussian, sample_latent, ClassSource, LatentBatch};
use crate::nn::{param_grads, Adam, AdamConfig, Bound, GradMap, Network};

/// Scalars of one training step. Inactive terms still report their value;
/// an inapplicable prior term reports 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepReport {
    pub d: f64,
    pub g: f64,
    pub e: f64,
    pub j_ce: f64,
    pub j_mse: f64,
    pub j_rec: f64,
    pub j_pce: f64,
    pub j_cm: f64,
    pub gp: f64,
}

impl StepReport {
    pub fn values(&self) -> [f64; 9] {
        [
            self.d, self.g, self.e, self.j_ce, self.j_mse, self.j_rec, self.j_pce, self.j_cm, self.gp,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn check(self) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { report: Box::new(self) })
        }
    }
}

/// Generator, critic and encoder with their optimizers.
#[derive(Debug, Clone)]
pub struct Gan {
    pub generator: Network,
    pub discriminator: Network,
    pub encoder: Network,
    opt_g: Adam,
    opt_d: Adam,
    opt_e: Adam,
}

impl Gan {
    pub fn new(
        config: &TrainConfig,
        classes: usize,
        data_dim: usize,
        mode: NormMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let generator = Network::build(config.generator_spec(classes, data_dim, mode), rng)?;
        let discriminator = Network::build(config.discriminator_spec(data_dim), rng)?;
        let encoder = Network::build(config.encoder_spec(classes, data_dim), rng)?;
        Self::from_networks(config, generator, discriminator, encoder)
    }

    /// Wraps existing networks with fresh optimizer state.
    pub fn from_networks(
        config: &TrainConfig,
        generator: Network,
        discriminator: Network,
        encoder: Network,
    ) -> Result<Self> {
        let head = encoder
            .head()
            .ok_or_else(|| Error::contract("encoder needs a continuous/categorical head"))?;
        let d = generator.output_dim();
        if discriminator.input_dim() != d || discriminator.output_dim() != 1 || encoder.input_dim() != d {
            return Err(Error::contract(format!(
                "networks disagree on the data width: generator emits {d}, critic {} -> {}, encoder reads {}",
                discriminator.input_dim(),
                discriminator.output_dim(),
                encoder.input_dim()
            )));
        }
        if generator.input_dim() != head.continuous + head.categorical || head.continuous != config.continuous_dim {
            return Err(Error::contract(format!(
                "generator input {} does not match encoder code {} + {} (configured continuous width {})",
                generator.input_dim(),
                head.continuous,
                head.categorical,
                config.continuous_dim
            )));
        }
        let adam = AdamConfig::with_lr(config.lr);
        Ok(Self {
            opt_g: Adam::new(adam, generator.params()),
            opt_d: Adam::new(adam, discriminator.params()),
            opt_e: Adam::new(adam, encoder.params()),
            generator,
            discriminator,
            encoder,
        })
    }

    pub fn classes(&self) -> usize {
        self.encoder.head().map_or(0, |h| h.categorical)
    }

    pub fn continuous_dim(&self) -> usize {
        self.encoder.head().map_or(0, |h| h.continuous)
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_dim()
    }

    /// Generator output for latent codes, `[n, d]`.
    pub fn generate(&self, codes: &Tensor) -> Result<Tensor> {
        self.generator.predict(codes)
    }
}

fn latent(
    gan: &Gan,
    config: &TrainConfig,
    n: usize,
    classes: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<LatentBatch> {
    let source = match (config.uniform_prior, classes) {
        (true, _) => ClassSource::Uniform,
        (false, Some(c)) => ClassSource::Fixed(c),
        (false, None) => {
            return Err(Error::contract(
                "learned-prior training needs prior assignments for the real batch",
            ))
        }
    };
    sample_latent(rng, n, gan.continuous_dim(), gan.classes(), config.sigma, source)
}

fn critic_step(
    gan: &mut Gan,
    config: &TrainConfig,
    x_r: &Tensor,
    classes: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let n = x_r.rows();
    let z = latent(gan, config, n, classes, rng)?;
    let x_g = gan.generator.predict(&z.concat()?)?;
    let d = &gan.discriminator;
    let tape = Tape::new();
    let bound = d.bind(&tape, true);
    let d_r = d.forward(&bound, &tape.constant(x_r.clone()))?;
    let d_g = d.forward(&bound, &tape.constant(x_g.clone()))?;
    let (loss, gp) = match config.gan_kind {
        GanKind::WassersteinGp => {
            let alpha: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let x_hat = interpolate_rows(x_r, &x_g, &alpha)?;
            let gp = gradient_penalty(d, &bound, &tape, &x_hat, config.lambda_gp, config.gp_center)?;
            (d_g.mean()?.sub(&d_r.mean()?)?.add(&gp)?, gp.item()?)
        }
        GanKind::Vanilla => (d_r.neg().softplus().mean()?.add(&d_g.softplus().mean()?)?, 0.0),
    };
    let value = loss.item()?;
    if !value.is_finite() {
        return Ok((value, gp));
    }
    let grads = param_grads(d, &tape, &bound, &loss)?;
    gan.opt_d.step(gan.discriminator.params_mut(), &grads)?;
    Ok((value, gp))
}

fn split_grads(net: &Network, grads: &[Tensor]) -> GradMap {
    net.params()
        .iter()
        .map(|(n, _)| n.to_string())
        .zip(grads.iter().cloned())
        .collect()
}

/// The generator/encoder objective on one graph, with G and E trainable and
/// the critic frozen.
pub struct Composite {
    pub tape: Tape,
    pub generator: Bound,
    pub encoder: Bound,
    /// Generator adversarial term.
    pub adversarial: Var,
    /// Every applicable auxiliary loss, active or not; `Pce` is absent under
    /// a uniform prior.
    pub terms: Vec<(Term, Var)>,
    /// `adversarial + sum of weight * J` over active terms.
    pub total: Var,
}

/// Builds the generator/encoder objective for real rows `x_r`, latent codes
/// `z` and a fresh continuous draw `fresh` for the cross-modality term.
pub fn composite_loss(
    gan: &Gan,
    config: &TrainConfig,
    x_r: &Tensor,
    z: &LatentBatch,
    fresh: &Tensor,
) -> Result<Composite> {
    let (g_net, d_net, e_net) = (&gan.generator, &gan.discriminator, &gan.encoder);
    let tape = Tape::new();
    let gb = g_net.bind(&tape, true);
    let eb = e_net.bind(&tape, true);
    let db = d_net.bind(&tape, false);

    let x_g = g_net.forward(&gb, &tape.constant(z.concat()?))?;
    let d_g = d_net.forward(&db, &x_g)?;
    let adversarial = match config.gan_kind {
        GanKind::WassersteinGp if config.literal_generator_sign => d_g.mean()?,
        GanKind::WassersteinGp => d_g.mean()?.neg(),
        GanKind::Vanilla => d_g.neg().softplus().mean()?,
    };

    let (cont_g, logits_g) = e_net.split_head(&e_net.forward(&eb, &x_g)?)?;
    let xr = tape.constant(x_r.clone());
    let (code_r, logits_r) = encoder_code(e_net, &eb, &xr)?;
    let mut terms = vec![
        (Term::Ce, loss_ce(&z.categorical, &logits_g)?),
        (Term::Mse, loss_mse(&cont_g, &tape.constant(z.continuous.clone()))?),
        (Term::Rec, loss_mse(&g_net.forward(&gb, &code_r)?, &xr)?),
        (
            Term::Cm,
            loss_cm(&x_g, &tape.constant(fresh.clone()), &logits_r, g_net, &gb)?,
        ),
    ];
    if !config.uniform_prior {
        terms.push((Term::Pce, loss_pce(&z.categorical, &logits_r)?));
    }
    let mut total = adversarial.clone();
    for (term, j) in &terms {
        if config.active(*term) {
            total = total.add(&j.scale(config.weight(*term)))?;
        }
    }
    Ok(Composite {
        tape,
        generator: gb,
        encoder: eb,
        adversarial,
        terms,
        total,
    })
}

/// `critic_iters` critic updates, then one simultaneous generator and
/// encoder update whose gradients come from the same graph.
///
/// `prior_classes` holds the frozen prior's hard assignment for each row of
/// `x_r`; it is ignored under `uniform_prior`.
pub fn train_step(
    gan: &mut Gan,
    config: &TrainConfig,
    x_r: &Tensor,
    prior_classes: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<StepReport> {
    let (n, _) = x_r.dims2("train_step")?;
    if n < 2 {
        return Err(Error::contract(format!("training batch of {n} rows; need at least 2")));
    }
    if let Some(c) = prior_classes {
        if c.len() != n {
            return Err(Error::contract(format!("{} prior classes for {n} rows", c.len())));
        }
    }
    let mut report = StepReport::default();
    for _ in 0..config.critic_iters {
        let (d, gp) = critic_step(gan, config, x_r, prior_classes, rng)?;
        report.d = d;
        report.gp = gp;
        report.check()?;
    }

    let z = latent(gan, config, n, prior_classes, rng)?;
    let fresh = gaussian(rng, n, gan.continuous_dim(), config.sigma)?;
    let c = composite_loss(gan, config, x_r, &z, &fresh)?;
    report.g = c.adversarial.item()?;
    for (term, j) in &c.terms {
        let v = j.item()?;
        match term {
            Term::Ce => report.j_ce = v,
            Term::Mse => report.j_mse = v,
            Term::Rec => report.j_rec = v,
            Term::Pce => report.j_pce = v,
            Term::Cm => report.j_cm = v,
        }
        if config.active(*term) {
            let w = config.weight(*term) * v;
            report.e += w;
            if *term != Term::Pce {
                report.g += w;
            }
        }
    }
    let report = report.check()?;

    // The adversarial term has no path to E and the prior term none to G, so
    // one backward pass yields each network's own gradient.
    let wrt: Vec<Var> = c.generator.vars().iter().chain(c.encoder.vars()).cloned().collect();
    let grads = c.tape.gradients(&c.total, &wrt)?;
    let (g_grads, e_grads) = grads.split_at(c.generator.vars().len());
    let g_grads = split_grads(&gan.generator, g_grads);
    let e_grads = split_grads(&gan.encoder, e_grads);
    let encoder_trains = Term::ALL.into_iter().any(|t| config.active(t));
    gan.opt_g.step(gan.generator.params_mut(), &g_grads)?;
    if encoder_trains {
        gan.opt_e.step(gan.encoder.params_mut(), &e_grads)?;
    }
    Ok(report)
}
