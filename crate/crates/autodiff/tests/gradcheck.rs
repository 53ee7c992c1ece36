//! Reverse-mode gradients against central finite differences, op by op.

use priorgan_autodiff::suite::{audit_ops, op_cases, random_input};
use priorgan_autodiff::{
    input_gradient, numeric_gradient, relative_error, second_order_check, Result, Tape, Tensor, Var, FD_STEP,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 100;
const TOL: f64 = 1e-4;

#[test]
fn every_op_matches_finite_differences() {
    for (name, worst) in audit_ops(INSTANCES, 2024).unwrap() {
        assert!(worst < TOL, "{name}: relative error {worst:e}");
    }
}

/// The backward pass of every smooth op is itself differentiable: the gradient
/// of `|grad L|^2` matches finite differences of that quantity.
#[test]
fn every_smooth_op_supports_double_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let skip = ["relu", "leaky_relu"];
    for case in op_cases().into_iter().filter(|c| !skip.contains(&c.name)) {
        let build = &case.build;
        let penalty = |tape: &Tape, xs: &[Var]| -> Result<Var> {
            let loss = build(tape, xs)?;
            let gs = tape.grad(&loss, xs, true)?;
            let mut total = gs[0].square().sum()?;
            for g in &gs[1..] {
                total = total.add(&g.square().sum()?)?;
            }
            Ok(total)
        };
        let mut worst = 0.0_f64;
        for _ in 0..20 {
            let inputs = (case.inputs)(&mut rng);
            let tape = Tape::new();
            let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            let p = penalty(&tape, &leaves).unwrap();
            let analytic = tape.gradients(&p, &leaves).unwrap();
            let eval = |xs: &[Tensor]| -> Result<f64> {
                let t = Tape::new();
                let vs: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
                penalty(&t, &vs)?.item()
            };
            for (i, a) in analytic.iter().enumerate() {
                let n = numeric_gradient(&eval, &inputs, i, FD_STEP).unwrap();
                let scale = n.max_abs().max(a.max_abs());
                // Linear ops have a constant penalty: both sides are ~0.
                if scale < 1e-7 {
                    continue;
                }
                worst = worst.max(relative_error(a.data(), n.data()));
            }
        }
        assert!(worst < TOL, "{}: second-order relative error {worst:e}", case.name);
    }
}

#[test]
fn second_order_quadratic_matches_closed_form() {
    // f = sum((theta * x)^2): grad_x f = 2 theta^2 x, P = 4 theta^4 |x|^2,
    // dP/dtheta = 16 theta^3 |x|^2.
    let f = |th: &Var, x: &Var| -> Result<Var> {
        let n = x.shape()[1];
        x.mul(&th.broadcast_scalar(&[1, n])?)?.square().sum()
    };
    let theta = Tensor::scalar(0.8);
    let x = Tensor::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
    let err = second_order_check(&f, &theta, &x).unwrap();
    assert!(err < 1e-6, "{err:e}");

    let tape = Tape::new();
    let th = tape.leaf(theta.clone());
    let xv = tape.leaf(x.clone());
    let gx = input_gradient(&xv, |x| f(&th, x)).unwrap();
    let p = gx.square().sum().unwrap();
    let g = tape.gradients(&p, &[th]).unwrap();
    let expected = 16.0 * 0.8_f64.powi(3) * 5.25;
    assert!((g[0].item().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn second_order_linear_penalty() {
    // f = x . w: grad_x f = w, so |grad_x f|^2 = |w|^2 with gradient 2w in w
    // and nothing in x.
    let w = Tensor::from_rows(&[[0.5], [-1.5], [2.0]]).unwrap();
    let tape = Tape::new();
    let wv = tape.leaf(w.clone());
    let x = tape.leaf(Tensor::from_rows(&[[0.3, 0.1, -0.7]]).unwrap());
    let gx = input_gradient(&x, |x| x.matmul(&wv)?.sum()).unwrap();
    let p = gx.square().sum().unwrap();
    let g = tape.gradients(&p, &[wv.clone(), x.clone()]).unwrap();
    assert_eq!(g[0].data(), &[1.0, -3.0, 4.0]);
    assert!(g[1].data().iter().all(|v| *v == 0.0));

    let f = |th: &Var, x: &Var| -> Result<Var> { x.matmul(th)?.sum() };
    let err = second_order_check(&f, &w, x.value()).unwrap();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn second_order_random_tanh_mlp() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let w1 = random_input(&mut rng, 3, 5);
        let w2 = random_input(&mut rng, 5, 1);
        let x = random_input(&mut rng, 4, 3);
        let w2c = w2.clone();
        let f = move |th: &Var, x: &Var| -> Result<Var> {
            let w2 = th.tape().constant(w2c.clone());
            x.matmul(th)?.tanh().matmul(&w2)?.sum()
        };
        let err = second_order_check(&f, &w1, &x).unwrap();
        assert!(err < 1e-3, "{err:e}");
    }
}

#[test]
fn tanh_mlp_input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w1 = random_input(&mut rng, 4, 6);
    let b1 = random_input(&mut rng, 1, 6);
    let w2 = random_input(&mut rng, 6, 1);
    let net = |x: &Var| -> Result<Var> {
        let t = x.tape();
        x.matmul(&t.constant(w1.clone()))?
            .add_bias(&t.constant(b1.clone()))?
            .tanh()
            .matmul(&t.constant(w2.clone()))?
            .sum()
    };
    let x = random_input(&mut rng, 3, 4);
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let gx = input_gradient(&xv, net).unwrap();
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let t = Tape::new();
        net(&t.constant(xs[0].clone()))?.item()
    };
    let n = numeric_gradient(&eval, &[x], 0, FD_STEP).unwrap();
    assert!(relative_error(gx.value().data(), n.data()) < 1e-4);
}
