//! Finite-difference audits of the composite losses and the gradient penalty
//! on small random networks.

use priorgan_autodiff::{gradient_check, numeric_gradient, relative_error, Tape, Tensor, Var, FD_STEP};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::losses::{gradient_penalty, loss_ce, loss_cm, loss_mse, loss_pce, loss_rec};
use super::Term;
use crate::error::Result;
use crate::latent::one_hot_batch;
use crate::nn::{Activation, Bound, HeadSplit, Network, NetworkSpec};
use crate::seed::{rng_for, Stream};

const D: usize = 4;
const DN: usize = 2;
const M: usize = 3;
const N: usize = 5;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

fn params(net: &Network) -> Vec<Tensor> {
    net.params().tensors().cloned().collect()
}

/// Hidden units closer than this to the activation kink disqualify an
/// instance: the finite-difference stencil could straddle the kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// Outcome of [`audit_losses`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossAudit {
    /// Worst relative error per term.
    pub worst: Vec<(Term, f64)>,
    /// Draws rejected for lying within [`KINK_MARGIN`] of a kink.
    pub redraws: usize,
}

fn near_kink(net: &Network, inputs: &[&Tensor]) -> Result<bool> {
    for x in inputs {
        for z in net.hidden_preactivations(x)? {
            if z.data().iter().any(|v| v.abs() < KINK_MARGIN) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Worst relative error of each auxiliary loss's gradient with respect to all
/// generator and encoder parameters, over `instances` random draws at which
/// every loss is differentiable.
pub fn audit_losses(instances: usize, seed: u64) -> Result<LossAudit> {
    let order = [Term::Ce, Term::Mse, Term::Rec, Term::Pce, Term::Cm];
    let mut worst = [0.0f64; 5];
    let mut redraws = 0;
    let mut draw = 0u64;
    let mut accepted = 0;
    while accepted < instances {
        let mut rng = rng_for(seed.wrapping_add(draw), Stream::Gan);
        draw += 1;
        let g_spec = NetworkSpec::mlp(DN + M, &[6], D).output_activation(Activation::Tanh);
        let g = Network::build(g_spec, &mut rng)?;
        let e_spec = NetworkSpec::mlp(D, &[6], DN + M).with_head(HeadSplit {
            continuous: DN,
            categorical: M,
        });
        let e = Network::build(e_spec, &mut rng)?;
        let x_r = uniform(&mut rng, N, D, 1.0);
        let classes: Vec<usize> = (0..N).map(|_| rng.random_range(0..M)).collect();
        let z_m = one_hot_batch(&classes, M)?;
        let z_n = uniform(&mut rng, N, DN, 0.3);
        let fresh = uniform(&mut rng, N, DN, 0.3);
        let code = Tensor::concat_cols(&[&z_n, &z_m])?;

        let enc = e.predict(&x_r)?;
        let (cont, logits) = (enc.slice_cols(0, DN)?, enc.slice_cols(DN, DN + M)?.softmax_rows()?);
        let real_code = Tensor::concat_cols(&[&cont, &logits])?;
        let mixed_code = Tensor::concat_cols(&[&fresh, &logits])?;
        if near_kink(&g, &[&code, &real_code, &mixed_code])? || near_kink(&e, &[&x_r, &g.predict(&code)?])? {
            redraws += 1;
            continue;
        }
        accepted += 1;
        let ng = g.params().len();

        let mut inputs = params(&g);
        inputs.extend(params(&e));
        // Closures must yield autodiff results; contract failures here are
        // fixed shapes and cannot occur.
        let bind = |vars: &[Var]| {
            (
                Bound::from_vars(&g, vars[..ng].to_vec()).expect("generator vars"),
                Bound::from_vars(&e, vars[ng..].to_vec()).expect("encoder vars"),
            )
        };
        let build = |term: Term| {
            let (g, e) = (&g, &e);
            let (x_r, z_m, z_n, fresh, code) = (&x_r, &z_m, &z_n, &fresh, &code);
            move |t: &Tape, v: &[Var]| -> priorgan_autodiff::Result<Var> {
                let (gb, eb) = bind(v);
                let xr = t.constant(x_r.clone());
                let x_g = || g.forward(&gb, &t.constant(code.clone())).expect("generator");
                let head = |x: &Var| e.split_head(&e.forward(&eb, x).expect("encoder")).expect("head");
                let j = match term {
                    Term::Ce => loss_ce(z_m, &head(&x_g()).1),
                    Term::Mse => loss_mse(&head(&x_g()).0, &t.constant(z_n.clone())),
                    Term::Rec => loss_rec(&xr, e, &eb, g, &gb),
                    Term::Pce => loss_pce(z_m, &head(&xr).1),
                    Term::Cm => loss_cm(&x_g(), &t.constant(fresh.clone()), &head(&xr).1, g, &gb),
                };
                Ok(j.expect("loss"))
            }
        };
        for (w, term) in worst.iter_mut().zip(order) {
            *w = w.max(gradient_check(&build(term), &inputs)?);
        }
    }
    Ok(LossAudit {
        worst: order.into_iter().zip(worst).collect(),
        redraws,
    })
}

/// Worst relative error of the penalty's parameter gradient on a one-hidden-
/// layer tanh critic, against finite differences of the penalty value.
pub fn audit_penalty(instances: usize, seed: u64, lambda: f64, center: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for trial in 0..instances as u64 {
        let mut rng = rng_for(seed.wrapping_add(trial), Stream::Gan);
        let spec = NetworkSpec::mlp(D, &[7], 1).hidden_activation(Activation::Tanh);
        let d = Network::build(spec, &mut rng)?;
        let x_hat = uniform(&mut rng, N, D, 1.0);
        let penalty = |vals: &[Tensor]| -> priorgan_autodiff::Result<f64> {
            let tape = Tape::new();
            let vars = vals.iter().map(|t| tape.leaf(t.clone())).collect();
            let b = Bound::from_vars(&d, vars).expect("critic vars");
            gradient_penalty(&d, &b, &tape, &x_hat, lambda, center)
                .expect("penalty")
                .item()
        };
        let tape = Tape::new();
        let b = d.bind(&tape, true);
        let gp = gradient_penalty(&d, &b, &tape, &x_hat, lambda, center)?;
        let analytic = tape.gradients(&gp, b.vars())?;
        let theta = params(&d);
        for (which, a) in analytic.iter().enumerate() {
            let numeric = numeric_gradient(&penalty, &theta, which, FD_STEP)?;
            worst = worst.max(relative_error(a.data(), numeric.data()));
        }
    }
    Ok(worst)
}

/// Largest deviation of a linear critic's zero-centered penalty from
/// `lambda * |w|^2`, and of its weight gradient from `2 lambda w`.
pub fn audit_linear_penalty(instances: usize, seed: u64, lambda: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for trial in 0..instances as u64 {
        let mut rng = rng_for(seed.wrapping_add(trial), Stream::Gan);
        let d = Network::build(NetworkSpec::mlp(D, &[], 1), &mut rng)?;
        let rows = rng.random_range(1..8);
        let x_hat = uniform(&mut rng, rows, D, 3.0);
        let tape = Tape::new();
        let b = d.bind(&tape, true);
        let gp = gradient_penalty(&d, &b, &tape, &x_hat, lambda, 0.0)?;
        let w = &b.vars()[0];
        let norm2: f64 = w.value().data().iter().map(|v| v * v).sum();
        worst = worst.max((gp.item()? - lambda * norm2).abs());
        let grad = tape.gradients(&gp, std::slice::from_ref(w))?;
        for (g, v) in grad[0].data().iter().zip(w.value().data()) {
            worst = worst.max((g - 2.0 * lambda * v).abs());
        }
    }
    Ok(worst)
}
