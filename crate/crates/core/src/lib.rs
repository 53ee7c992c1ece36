//! Clustering with a learned categorical prior and a generator / critic /
//! encoder game.
//!
//! Two phases. First a prior network learns cluster assignments from
//! unlabeled data by regularized information maximization with
//! self-augmentation ([`sim_prior`]). Its hard assignments then supply the
//! categorical part of the latent code while a generator, critic and encoder
//! are trained adversarially ([`simi_gan`]); the encoder's latent space is
//! clustered with k-means and scored against ground truth ([`eval`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod latent;
pub mod nn;
pub mod seed;
pub mod sim_prior;
pub mod simi_gan;

pub use error::{Error, Result};
pub use priorgan_autodiff::{Tape, Tensor, Var};
