use priorgan_autodiff::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::{input_gradient, sum_head, Bound, Network};

/// Mean categorical cross-entropy of `softmax(logits)` against `targets`.
pub fn loss_ce(targets: &Tensor, logits: &Var) -> Result<Var> {
    if targets.shape() != logits.shape() {
        return Err(Error::contract(format!(
            "cross-entropy targets {:?} vs logits {:?}",
            targets.shape(),
            logits.shape()
        )));
    }
    let n = logits.shape()[0] as f64;
    Ok(logits.log_softmax()?.mul_const(targets)?.sum()?.scale(-1.0 / n))
}

/// Mean over batch and columns of the squared difference.
pub fn loss_mse(a: &Var, b: &Var) -> Result<Var> {
    Ok(a.sub(b)?.square().mean()?)
}

/// Encoder output as a generator input: `[z_n_hat | softmax(logits)]`.
pub fn encoder_code(encoder: &Network, enc_bound: &Bound, x: &Var) -> Result<(Var, Var)> {
    let (cont, logits) = encoder.split_head(&encoder.forward(enc_bound, x)?)?;
    let code = Var::concat_cols(&[&cont, &logits.softmax()?])?;
    Ok((code, logits))
}

fn check_pair(encoder: &Network, generator: &Network) -> Result<()> {
    if encoder.output_dim() != generator.input_dim() || generator.output_dim() != encoder.input_dim() {
        return Err(Error::contract(format!(
            "encoder {} -> {} does not pair with generator {} -> {}",
            encoder.input_dim(),
            encoder.output_dim(),
            generator.input_dim(),
            generator.output_dim()
        )));
    }
    Ok(())
}

/// `mse(x_r, G(E(x_r)))`.
pub fn loss_rec(
    x_r: &Var,
    encoder: &Network,
    enc_bound: &Bound,
    generator: &Network,
    gen_bound: &Bound,
) -> Result<Var> {
    check_pair(encoder, generator)?;
    let (code, _) = encoder_code(encoder, enc_bound, x_r)?;
    loss_mse(&generator.forward(gen_bound, &code)?, x_r)
}

/// Prior-bounded cross-entropy: prior assignments against the encoder's
/// categorical head on real data.
pub fn loss_pce(prior_one_hot: &Tensor, real_logits: &Var) -> Result<Var> {
    loss_ce(prior_one_hot, real_logits)
}

/// `mse(x_g, G([z_n' | softmax(E(x_r) logits)]))`.
pub fn loss_cm(
    x_g: &Var,
    fresh_continuous: &Var,
    real_logits: &Var,
    generator: &Network,
    gen_bound: &Bound,
) -> Result<Var> {
    let code = Var::concat_cols(&[fresh_continuous, &real_logits.softmax()?])?;
    loss_mse(x_g, &generator.forward(gen_bound, &code)?)
}

/// Interpolation points `alpha_i x_r,i + (1 - alpha_i) x_g,i`.
pub fn interpolate_rows(x_r: &Tensor, x_g: &Tensor, alpha: &[f64]) -> Result<Tensor> {
    if x_r.shape() != x_g.shape() || alpha.len() != x_r.rows() {
        return Err(Error::contract(format!(
            "penalty batches {:?} / {:?} with {} mixing weights",
            x_r.shape(),
            x_g.shape(),
            alpha.len()
        )));
    }
    let d = x_r.cols();
    let data = x_r
        .data()
        .iter()
        .zip(x_g.data())
        .enumerate()
        .map(|(i, (r, g))| {
            let a = alpha[i / d];
            a * r + (1.0 - a) * g
        })
        .collect();
    Ok(Tensor::matrix(x_r.rows(), d, data)?)
}

/// `lambda * mean_i (||grad_x D(x_hat_i)|| - center)^2`, differentiable in the
/// discriminator's parameters.
pub fn gradient_penalty(
    discriminator: &Network,
    disc_bound: &Bound,
    tape: &Tape,
    x_hat: &Tensor,
    lambda: f64,
    center: f64,
) -> Result<Var> {
    let x = tape.leaf(x_hat.clone());
    let grad = input_gradient(discriminator, disc_bound, &x, sum_head)?;
    let sq_norm = grad.square().sum_cols()?;
    let per_sample = if center == 0.0 {
        // Avoids the sqrt singularity at a zero gradient.
        sq_norm
    } else {
        sq_norm.sqrt().add_scalar(-center).square()
    };
    Ok(per_sample.mean()?.scale(lambda))
}
