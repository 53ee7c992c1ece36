//! Finite-difference checks for first- and second-order gradients.
//!
//! Errors are reported norm-wise: `max|a - b| / max(max|b|, floor)`, which
//! stays meaningful when individual gradient entries are near zero.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Central-difference step used throughout.
pub const FD_STEP: f64 = 1e-5;

const REL_FLOOR: f64 = 1e-8;

/// Norm-wise relative error of `actual` against `expected`.
pub fn relative_error(actual: &[f64], expected: &[f64]) -> f64 {
    let diff = actual
        .iter()
        .zip(expected)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = expected.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    diff / scale.max(REL_FLOOR)
}

/// Central finite-difference gradient of a scalar function of several tensors,
/// taken with respect to `inputs[which]`.
pub fn numeric_gradient(
    f: &dyn Fn(&[Tensor]) -> Result<f64>,
    inputs: &[Tensor],
    which: usize,
    step: f64,
) -> Result<Tensor> {
    let mut work = inputs.to_vec();
    let mut grad = Tensor::zeros(inputs[which].shape());
    for i in 0..inputs[which].len() {
        let orig = inputs[which].data()[i];
        work[which].data_mut()[i] = orig + step;
        let up = f(&work)?;
        work[which].data_mut()[i] = orig - step;
        let down = f(&work)?;
        work[which].data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Compares reverse-mode gradients of `build` against central differences for
/// every input. `build` receives leaves on a fresh tape and returns a scalar.
///
/// Returns the worst relative error over all inputs.
pub fn gradient_check(build: &dyn Fn(&Tape, &[Var]) -> Result<Var>, inputs: &[Tensor]) -> Result<f64> {
    let tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&tape, &leaves)?;
    let analytic = tape.gradients(&loss, &leaves)?;

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        build(&t, &vs)?.item()
    };
    let mut worst = 0.0_f64;
    for (which, a) in analytic.iter().enumerate() {
        let numeric = numeric_gradient(&eval, inputs, which, FD_STEP)?;
        worst = worst.max(relative_error(a.data(), numeric.data()));
    }
    Ok(worst)
}

/// Gradient of `head(x)` with respect to `x`, kept on the tape.
///
/// `head` must reduce to a scalar (typically a sum over per-sample outputs, so
/// each row of the result is that sample's own input gradient). The returned
/// var can be used to build penalties that are differentiated again.
pub fn input_gradient(x: &Var, head: impl FnOnce(&Var) -> Result<Var>) -> Result<Var> {
    let y = head(x)?;
    let mut g = x.tape().grad(&y, std::slice::from_ref(x), true)?;
    Ok(g.remove(0))
}

/// Validates the double-backward path.
///
/// `f(theta, x)` builds a scalar. The penalty `P(theta) = |grad_x f|^2` is
/// differentiated with respect to `theta` through the recorded first backward
/// pass, and compared with central differences of `P` in `theta`.
pub fn second_order_check(f: &dyn Fn(&Var, &Var) -> Result<Var>, theta: &Tensor, point: &Tensor) -> Result<f64> {
    let penalty = |tape: &Tape, th: &Var| -> Result<Var> {
        let x = tape.leaf(point.clone());
        let gx = input_gradient(&x, |x| f(th, x))?;
        gx.square().sum()
    };

    let tape = Tape::new();
    let th = tape.leaf(theta.clone());
    let p = penalty(&tape, &th)?;
    let analytic = tape.gradients(&p, std::slice::from_ref(&th))?.remove(0);

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let t = Tape::new();
        let th = t.leaf(xs[0].clone());
        penalty(&t, &th)?.item()
    };
    let numeric = numeric_gradient(&eval, std::slice::from_ref(theta), 0, FD_STEP)?;
    Ok(relative_error(analytic.data(), numeric.data()))
}
