//! Phase 2: generator, critic and encoder trained against a continuous-discrete
//! latent prior whose categorical part comes from a learned (or uniform)
//! prior.

pub mod audit;
mod losses;
mod step;
mod train;

use serde::{Deserialize, Serialize};

use crate::data::NormMode;
use crate::error::{Error, Result};
use crate::nn::{Activation, HeadSplit, NetworkSpec};

pub use losses::{encoder_code, gradient_penalty, interpolate_rows, loss_ce, loss_cm, loss_mse, loss_pce, loss_rec};
pub use step::{composite_loss, train_step, Composite, Gan, StepReport};
pub use train::{evaluate, history_csv, train, EpochRow, EvalSplit, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanKind {
    WassersteinGp,
    /// Logistic critic with the non-saturating generator loss; no penalty.
    Vanilla,
}

/// Which loss terms are active. A disabled term contributes nothing to any
/// update; its value is still reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossToggles {
    pub ce: bool,
    pub mse: bool,
    pub rec: bool,
    pub pce: bool,
    pub cm: bool,
}

impl Default for LossToggles {
    fn default() -> Self {
        Self {
            ce: true,
            mse: true,
            rec: true,
            pce: true,
            cm: true,
        }
    }
}

impl LossToggles {
    /// Only the two cyclic terms.
    pub fn cyclic_only() -> Self {
        Self {
            ce: true,
            mse: true,
            rec: false,
            pce: false,
            cm: false,
        }
    }

    pub fn none() -> Self {
        Self {
            ce: false,
            mse: false,
            rec: false,
            pce: false,
            cm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub alpha_cl: f64,
    pub alpha_mse: f64,
    pub alpha_re: f64,
    pub alpha_pcl: f64,
    pub alpha_cm: f64,
    pub lambda_gp: f64,
    pub gp_center: f64,
    pub critic_iters: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Standard deviation of the continuous latent part.
    pub sigma: f64,
    /// Width `d_n` of the continuous latent part.
    pub continuous_dim: usize,
    /// Hidden widths shared by generator, critic and encoder.
    pub hidden: Vec<usize>,
    pub gan_kind: GanKind,
    pub losses: LossToggles,
    /// Draw classes uniformly instead of from the learned prior; disables the
    /// prior-bounded term.
    pub uniform_prior: bool,
    /// Use the literal `+D(x_g)` generator term instead of `-D(x_g)`.
    pub literal_generator_sign: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha_cl: 10.0,
            alpha_mse: 10.0,
            alpha_re: 1.0,
            alpha_pcl: 10.0,
            alpha_cm: 1.0,
            lambda_gp: 10.0,
            gp_center: 0.0,
            critic_iters: 1,
            epochs: 200,
            batch: 30,
            lr: 1e-4,
            sigma: crate::latent::DEFAULT_SIGMA,
            continuous_dim: 30,
            hidden: vec![256, 256],
            gan_kind: GanKind::WassersteinGp,
            losses: LossToggles::default(),
            uniform_prior: false,
            literal_generator_sign: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha_cl", self.alpha_cl),
            ("alpha_mse", self.alpha_mse),
            ("alpha_re", self.alpha_re),
            ("alpha_pcl", self.alpha_pcl),
            ("alpha_cm", self.alpha_cm),
            ("lambda_gp", self.lambda_gp),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "gan.{name} must be a finite value >= 0, got {w}"
                )));
            }
        }
        if self.gp_center != 0.0 && self.gp_center != 1.0 {
            return Err(Error::Config(format!(
                "gan.gp_center must be 0 or 1, got {}",
                self.gp_center
            )));
        }
        if self.batch < 2 {
            return Err(Error::Config(format!("gan.batch must be >= 2, got {}", self.batch)));
        }
        if self.critic_iters == 0 {
            return Err(Error::Config("gan.critic_iters must be >= 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("gan.lr must be > 0, got {}", self.lr)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("gan.sigma must be > 0, got {}", self.sigma)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("gan.hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `true` when the term enters the updates.
    pub fn active(&self, term: Term) -> bool {
        let t = &self.losses;
        match term {
            Term::Ce => t.ce && self.alpha_cl > 0.0,
            Term::Mse => t.mse && self.alpha_mse > 0.0,
            Term::Rec => t.rec && self.alpha_re > 0.0,
            Term::Pce => t.pce && self.alpha_pcl > 0.0 && !self.uniform_prior,
            Term::Cm => t.cm && self.alpha_cm > 0.0,
        }
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Ce => self.alpha_cl,
            Term::Mse => self.alpha_mse,
            Term::Rec => self.alpha_re,
            Term::Pce => self.alpha_pcl,
            Term::Cm => self.alpha_cm,
        }
    }

    pub fn generator_spec(&self, classes: usize, data_dim: usize, mode: NormMode) -> NetworkSpec {
        let out = match mode {
            NormMode::Signed => Activation::Tanh,
            NormMode::Unit => Activation::Sigmoid,
        };
        NetworkSpec::mlp(self.continuous_dim + classes, &self.hidden, data_dim).output_activation(out)
    }

    pub fn discriminator_spec(&self, data_dim: usize) -> NetworkSpec {
        NetworkSpec::mlp(data_dim, &self.hidden, 1)
    }

    pub fn encoder_spec(&self, classes: usize, data_dim: usize) -> NetworkSpec {
        NetworkSpec::mlp(data_dim, &self.hidden, self.continuous_dim + classes).with_head(HeadSplit {
            continuous: self.continuous_dim,
            categorical: classes,
        })
    }
}

/// The weighted auxiliary losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    /// Cyclic categorical: encoder recovers `z_M` from `G(z)`.
    Ce,
    /// Cyclic continuous: encoder recovers `z_n` from `G(z)`.
    Mse,
    /// Reconstruction `G(E(x_r))` of real data.
    Rec,
    /// Encoder categorical head on real data against the prior's class.
    Pce,
    /// Cross-modality: `G` from a fresh `z_n` and the encoder's class on real
    /// data against `x_g`.
    Cm,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::Ce, Term::Mse, Term::Rec, Term::Pce, Term::Cm];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_training_recipe() {
        let c = TrainConfig::default();
        assert_eq!(
            (
                c.alpha_cl,
                c.alpha_mse,
                c.alpha_re,
                c.alpha_pcl,
                c.alpha_cm,
                c.lambda_gp
            ),
            (10.0, 10.0, 1.0, 10.0, 1.0, 10.0)
        );
        assert_eq!(
            (c.critic_iters, c.epochs, c.batch, c.sigma, c.lr),
            (1, 200, 30, 0.1, 1e-4)
        );
        assert_eq!(c.gp_center, 0.0);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = TrainConfig::default();
        for bad in [
            TrainConfig { batch: 1, ..c.clone() },
            TrainConfig {
                alpha_cm: -1.0,
                ..c.clone()
            },
            TrainConfig {
                gp_center: 0.5,
                ..c.clone()
            },
            TrainConfig {
                critic_iters: 0,
                ..c.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn uniform_prior_disables_the_prior_term() {
        let c = TrainConfig {
            uniform_prior: true,
            ..TrainConfig::default()
        };
        assert!(!c.active(Term::Pce));
        assert!(c.active(Term::Ce));
    }
}
