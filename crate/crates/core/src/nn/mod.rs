//! Multilayer perceptrons, parameter files and the Adam optimizer.

mod adam;
mod network;
mod params_io;

use priorgan_autodiff::{Tape, Var};

pub use adam::{Adam, AdamConfig, GradMap};
pub use network::{Activation, Bound, HeadSplit, Network, NetworkSpec, ParamSet, DEFAULT_LEAKY_SLOPE};
pub use params_io::{load_params, read_params, save_params, write_params, MAGIC, VERSION};

use crate::error::Result;

/// Gradients of `loss` for every parameter of `net` bound as `bound`.
pub fn param_grads(net: &Network, tape: &Tape, bound: &Bound, loss: &Var) -> Result<GradMap> {
    let grads = tape.gradients(loss, bound.vars())?;
    Ok(net.params().iter().map(|(n, _)| n.to_string()).zip(grads).collect())
}

/// Input gradient of `net` at `x`, reduced per sample by `head` and summed.
///
/// The result is recorded on the tape, so penalties built from it
/// differentiate back into the parameters in `bound`.
pub fn input_gradient(net: &Network, bound: &Bound, x: &Var, head: impl Fn(&Var) -> Result<Var>) -> Result<Var> {
    let mut err = None;
    let g = priorgan_autodiff::input_gradient(x, |x| {
        let out = net.forward(bound, x).map_err(|e| {
            err = Some(e);
            priorgan_autodiff::AutodiffError::Contract("forward failed".into())
        })?;
        let s = head(&out).map_err(|e| {
            let msg = e.to_string();
            err = Some(e);
            priorgan_autodiff::AutodiffError::Contract(msg)
        })?;
        if !s.value().is_scalar() {
            return Err(priorgan_autodiff::AutodiffError::Contract(format!(
                "scalar head produced shape {:?}",
                s.shape()
            )));
        }
        Ok(s)
    });
    match (g, err) {
        (Ok(g), _) => Ok(g),
        (Err(_), Some(e)) => Err(e),
        (Err(e), None) => Err(e.into()),
    }
}

/// Sums network output: the usual scalar head for single-output critics.
pub fn sum_head(out: &Var) -> Result<Var> {
    Ok(out.sum()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use priorgan_autodiff::{numeric_gradient, relative_error, Tensor, FD_STEP};
    use rand::Rng;

    use crate::seed::{rng_for, Stream};

    #[test]
    fn mlp_parameter_gradients_match_finite_differences() {
        let mut rng = rng_for(3, Stream::Init);
        let spec = NetworkSpec::mlp(4, &[5, 6], 3).hidden_activation(Activation::Tanh);
        let net = Network::build(spec, &mut rng).unwrap();
        let x = Tensor::matrix(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let loss_of = |n: &Network, tape: &Tape, b: &Bound| -> Result<Var> {
            let out = n.forward(b, &tape.constant(x.clone()))?;
            Ok(out.log_softmax()?.slice_cols(0, 1)?.mean()?)
        };
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let loss = loss_of(&net, &tape, &bound).unwrap();
        let grads = param_grads(&net, &tape, &bound, &loss).unwrap();

        for (name, p) in net.params().iter() {
            let eval = |xs: &[Tensor]| -> priorgan_autodiff::Result<f64> {
                let mut n = net.clone();
                for (pn, t) in n.params_mut().entries_mut() {
                    if pn == name {
                        *t = xs[0].clone();
                    }
                }
                let tape = Tape::new();
                let b = n.bind(&tape, false);
                loss_of(&n, &tape, &b).unwrap().item()
            };
            let num = numeric_gradient(&eval, std::slice::from_ref(p), 0, FD_STEP).unwrap();
            let err = relative_error(grads[name].data(), num.data());
            assert!(err < 1e-4, "{name}: {err:e}");
        }
    }

    #[test]
    fn linear_critic_input_gradient() {
        let spec = NetworkSpec::mlp(3, &[], 1);
        let mut net = Network::build(spec, &mut rng_for(0, Stream::Init)).unwrap();
        let w = Tensor::from_rows(&[[0.5], [-1.0], [2.0]]).unwrap();
        net.params_mut().entries_mut()[0].1 = w;
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let x = tape.leaf(Tensor::from_rows(&[[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]).unwrap());
        let g = input_gradient(&net, &bound, &x, sum_head).unwrap();
        assert_eq!(g.value().row(0), &[0.5, -1.0, 2.0]);
        assert_eq!(g.value().row(1), &[0.5, -1.0, 2.0]);
        assert!(g.requires_grad());
    }

    #[test]
    fn non_scalar_head_is_rejected() {
        let net = Network::build(NetworkSpec::mlp(3, &[], 2), &mut rng_for(0, Stream::Init)).unwrap();
        let tape = Tape::new();
        let bound = net.bind(&tape, true);
        let x = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(input_gradient(&net, &bound, &x, |o| Ok(o.clone())).is_err());
    }
}
