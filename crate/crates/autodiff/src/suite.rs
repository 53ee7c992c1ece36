//! A catalogue of every differentiable op with random-input generators, for
//! finite-difference audits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::check::gradient_check;
use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Uniform entries in `[-1, 1]` kept at least 1e-2 away from zero so that
/// finite differences never straddle a ReLU kink.
pub fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v.abs() < 1e-2 {
                0.5
            } else {
                v
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    random_input(rng, rows, cols).map(|v| v.abs() + 0.1)
}

/// `sum(out * weights)` with fixed random weights, so every output entry matters.
fn project(tape: &Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = out.shape().to_vec();
    let w: Vec<f64> = (0..out.value().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = tape.constant(Tensor::new(shape, w)?);
    out.mul(&w)?.sum()
}

pub type Build = Box<dyn Fn(&Tape, &[Var]) -> Result<Var>>;

/// Draws the inputs of one instance.
pub type Inputs = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Inputs,
    pub build: Build,
}

fn unary(name: &'static str, f: fn(&Var) -> Result<Var>, pos: bool) -> OpCase {
    OpCase {
        name,
        inputs: Box::new(move |rng| {
            let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
            vec![if pos {
                positive(rng, r, c)
            } else {
                random_input(rng, r, c)
            }]
        }),
        build: Box::new(move |tape, xs| project(tape, f(&xs[0])?, 7)),
    }
}

fn binary(name: &'static str, f: fn(&Var, &Var) -> Result<Var>) -> OpCase {
    OpCase {
        name,
        inputs: Box::new(|rng| {
            let (r, c) = (rng.random_range(1..5), rng.random_range(1..5));
            vec![random_input(rng, r, c), random_input(rng, r, c)]
        }),
        build: Box::new(move |tape, xs| project(tape, f(&xs[0], &xs[1])?, 11)),
    }
}

/// One case per op; each builds a scalar from the op output.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        binary("add", |a, b| a.add(b)),
        binary("sub", |a, b| a.sub(b)),
        binary("mul", |a, b| a.mul(b)),
        unary("neg", |a| Ok(a.neg()), false),
        unary("scale", |a| Ok(a.scale(-1.7)), false),
        unary("add_scalar", |a| Ok(a.add_scalar(0.3)), false),
        OpCase {
            name: "matmul",
            inputs: Box::new(|rng| {
                let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
                vec![random_input(rng, m, k), random_input(rng, k, n)]
            }),
            build: Box::new(|tape, xs| project(tape, xs[0].matmul(&xs[1])?, 3)),
        },
        unary("transpose", |a| a.transpose(), false),
        OpCase {
            name: "add_bias",
            inputs: Box::new(|rng| {
                let (n, k) = (rng.random_range(1..5), rng.random_range(1..5));
                vec![random_input(rng, n, k), random_input(rng, 1, k)]
            }),
            build: Box::new(|tape, xs| project(tape, xs[0].add_bias(&xs[1])?, 5)),
        },
        unary("sum", |a| a.sum(), false),
        unary("mean", |a| a.mean(), false),
        unary("sum_rows", |a| a.sum_rows(), false),
        unary("sum_cols", |a| a.sum_cols(), false),
        OpCase {
            name: "broadcast_rows",
            inputs: Box::new(|rng| {
                let k = rng.random_range(1..5);
                vec![random_input(rng, 1, k)]
            }),
            build: Box::new(|tape, xs| project(tape, xs[0].broadcast_rows(3)?, 13)),
        },
        OpCase {
            name: "broadcast_cols",
            inputs: Box::new(|rng| {
                let n = rng.random_range(1..5);
                vec![random_input(rng, n, 1)]
            }),
            build: Box::new(|tape, xs| project(tape, xs[0].broadcast_cols(4)?, 17)),
        },
        unary("relu", |a| Ok(a.relu()), false),
        unary("leaky_relu", |a| Ok(a.leaky_relu(0.2)), false),
        unary("tanh", |a| Ok(a.tanh()), false),
        unary("sigmoid", |a| Ok(a.sigmoid()), false),
        unary("softplus", |a| Ok(a.softplus()), false),
        unary("exp", |a| Ok(a.exp()), false),
        unary("ln", |a| Ok(a.ln()), true),
        unary("sqrt", |a| Ok(a.sqrt()), true),
        unary("recip", |a| Ok(a.recip()), true),
        unary("square", |a| Ok(a.square()), false),
        unary("softmax", |a| a.softmax(), false),
        unary("log_softmax", |a| a.log_softmax(), false),
        unary("row_norm", |a| a.row_norm(), true),
        OpCase {
            name: "concat_cols",
            inputs: Box::new(|rng| {
                let n = rng.random_range(1..5);
                let (a, b) = (rng.random_range(1..4), rng.random_range(1..4));
                vec![random_input(rng, n, a), random_input(rng, n, b)]
            }),
            build: Box::new(|tape, xs| project(tape, Var::concat_cols(&[&xs[0], &xs[1]])?, 19)),
        },
        OpCase {
            name: "slice_cols",
            inputs: Box::new(|rng| {
                let n = rng.random_range(1..5);
                vec![random_input(rng, n, 5)]
            }),
            build: Box::new(|tape, xs| project(tape, xs[0].slice_cols(1, 4)?, 23)),
        },
        OpCase {
            name: "pad_cols",
            inputs: Box::new(|rng| {
                let n = rng.random_range(1..5);
                vec![random_input(rng, n, 2)]
            }),
            build: Box::new(|tape, xs| project(tape, xs[0].pad_cols(1, 5)?, 29)),
        },
    ]
}

/// Worst relative error per op over `instances` random draws.
pub fn audit_ops(instances: usize, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op_cases()
        .into_iter()
        .map(|case| {
            let mut worst = 0.0_f64;
            for _ in 0..instances {
                let inputs = (case.inputs)(&mut rng);
                worst = worst.max(gradient_check(&*case.build, &inputs)?);
            }
            Ok((case.name, worst))
        })
        .collect()
}
