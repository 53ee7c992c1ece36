//! The differentiation tape.
//!
//! Every [`Var`] is a node on a [`Tape`]. Node ids are assigned in creation
//! order, so id order is a topological order of the graph. Backward walks ids
//! in reverse, visiting each node once.
//!
//! Vector-Jacobian products are themselves written in terms of `Var` ops.
//! With `create_graph = true` they are recorded on the same tape, so the
//! gradients that come back are differentiable a second time. Without it
//! they run on a throwaway scratch tape and only the values are kept.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    AddBias(usize, usize),
    SumAll(usize),
    SumRows(usize),
    SumCols(usize),
    BroadcastScalar(usize),
    BroadcastRows(usize),
    BroadcastCols(usize),
    /// Elementwise product with a constant; carries ReLU/LeakyReLU slopes.
    MaskMul(usize, Rc<Tensor>),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Recip(usize),
    Square(usize),
    Softmax(usize),
    LogSoftmax(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    PadCols(usize, usize),
    Reshape(usize),
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) | AddBias(a, b) => vec![*a, *b],
            Neg(a)
            | Scale(a, _)
            | AddScalar(a)
            | Transpose(a)
            | SumAll(a)
            | SumRows(a)
            | SumCols(a)
            | BroadcastScalar(a)
            | BroadcastRows(a)
            | BroadcastCols(a)
            | MaskMul(a, _)
            | Tanh(a)
            | Sigmoid(a)
            | Softplus(a)
            | Exp(a)
            | Log(a)
            | Sqrt(a)
            | Recip(a)
            | Square(a)
            | Softmax(a)
            | LogSoftmax(a)
            | SliceCols(a, _)
            | PadCols(a, _)
            | Reshape(a) => vec![*a],
            ConcatCols(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A recording of tensor operations, shared by all the [`Var`]s built on it.
///
/// Cloning a `Tape` clones the handle, not the recording.
#[derive(Clone, Default)]
pub struct Tape {
    nodes: Rc<RefCell<Vec<Node>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let value = Rc::new(value);
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::clone(&value),
            op,
            requires_grad,
        });
        Var {
            tape: self.clone(),
            id,
            value,
            requires_grad,
        }
    }

    /// A leaf that gradients flow into.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn constant_rc(&self, value: Rc<Tensor>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::clone(&value),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var {
            tape: self.clone(),
            id,
            value,
            requires_grad: false,
        }
    }

    fn var_at(&self, id: usize) -> Var {
        let nodes = self.nodes.borrow();
        let node = &nodes[id];
        Var {
            tape: self.clone(),
            id,
            value: Rc::clone(&node.value),
            requires_grad: node.requires_grad,
        }
    }

    /// Gradients of the scalar `loss` with respect to each of `wrt`.
    ///
    /// Leaves that `loss` does not depend on get a zero gradient. With
    /// `create_graph` the returned vars are recorded on this tape and can be
    /// differentiated again; otherwise they are constants.
    pub fn grad(&self, loss: &Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        if !Rc::ptr_eq(&loss.tape.nodes, &self.nodes) {
            return Err(AutodiffError::Contract("loss belongs to another tape".into()));
        }
        if !loss.value.is_scalar() {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.value.shape()
            )));
        }
        for w in wrt {
            if !Rc::ptr_eq(&w.tape.nodes, &self.nodes) {
                return Err(AutodiffError::Contract(
                    "gradient requested for a var on another tape".into(),
                ));
            }
        }
        if create_graph {
            self.grad_recorded(loss, wrt)
        } else {
            let grads = self.grad_values(loss)?;
            Ok(wrt
                .iter()
                .map(|w| match grads.get(w.id).and_then(Option::as_ref) {
                    Some(g) => self.constant_rc(Rc::clone(g)),
                    None => self.constant(Tensor::zeros(w.value.shape())),
                })
                .collect())
        }
    }

    /// Like [`grad`](Self::grad) without graph recording, returning plain tensors.
    pub fn gradients(&self, loss: &Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        if !loss.value.is_scalar() {
            return Err(AutodiffError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.value.shape()
            )));
        }
        let grads = self.grad_values(loss)?;
        Ok(wrt
            .iter()
            .map(|w| match grads.get(w.id).and_then(Option::as_ref) {
                Some(g) => (**g).clone(),
                None => Tensor::zeros(w.value.shape()),
            })
            .collect())
    }

    fn node_info(&self, id: usize) -> (Op, bool) {
        let nodes = self.nodes.borrow();
        (nodes[id].op.clone(), nodes[id].requires_grad)
    }

    fn grad_values(&self, loss: &Var) -> Result<Vec<Option<Rc<Tensor>>>> {
        let mut grads: Vec<Option<Rc<Tensor>>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Rc::new(Tensor::full(loss.value.shape(), 1.0)));
        for id in (0..=loss.id).rev() {
            let (op, requires_grad) = self.node_info(id);
            if !requires_grad || matches!(op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let scratch = Tape::new();
            let parents = op.parents();
            let inputs: Vec<Var> = {
                let nodes = self.nodes.borrow();
                parents
                    .iter()
                    .map(|&p| scratch.constant_rc(Rc::clone(&nodes[p].value)))
                    .collect()
            };
            let out = scratch.constant_rc(Rc::clone(&self.nodes.borrow()[id].value));
            let g_var = scratch.constant_rc(Rc::clone(&g));
            let contribs = vjp(&op, &inputs, &out, &g_var)?;
            for (&p, c) in parents.iter().zip(contribs) {
                if !self.nodes.borrow()[p].requires_grad {
                    continue;
                }
                grads[p] = Some(match grads[p].take() {
                    None => c.value,
                    Some(prev) => Rc::new(prev.zip_with(&c.value, "add", |a, b| a + b)?),
                });
            }
        }
        Ok(grads)
    }

    fn grad_recorded(&self, loss: &Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let mut grads: Vec<Option<Var>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(self.constant(Tensor::full(loss.value.shape(), 1.0)));
        for id in (0..=loss.id).rev() {
            let (op, requires_grad) = self.node_info(id);
            if !requires_grad || matches!(op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].clone() else { continue };
            let parents = op.parents();
            let inputs: Vec<Var> = parents.iter().map(|&p| self.var_at(p)).collect();
            let out = self.var_at(id);
            let contribs = vjp(&op, &inputs, &out, &g)?;
            for ((&p, c), input) in parents.iter().zip(contribs).zip(&inputs) {
                if !input.requires_grad {
                    continue;
                }
                grads[p] = Some(match grads[p].take() {
                    None => c,
                    Some(prev) => prev.add(&c)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| match grads.get(w.id).and_then(Clone::clone) {
                Some(g) => g,
                None => self.constant(Tensor::zeros(w.value.shape())),
            })
            .collect())
    }
}

/// Vector-Jacobian product of one node, written with differentiable ops.
fn vjp(op: &Op, ins: &[Var], out: &Var, g: &Var) -> Result<Vec<Var>> {
    use Op::*;
    Ok(match op {
        Leaf => Vec::new(),
        Add(..) => vec![g.clone(), g.clone()],
        Sub(..) => vec![g.clone(), g.neg()],
        Mul(..) => vec![g.mul(&ins[1])?, g.mul(&ins[0])?],
        Neg(_) => vec![g.neg()],
        Scale(_, c) => vec![g.scale(*c)],
        AddScalar(_) => vec![g.clone()],
        MatMul(..) => vec![g.matmul(&ins[1].transpose()?)?, ins[0].transpose()?.matmul(g)?],
        Transpose(_) => vec![g.transpose()?],
        AddBias(..) => vec![g.clone(), g.sum_rows()?],
        SumAll(_) => vec![g.broadcast_scalar(ins[0].shape())?],
        SumRows(_) => vec![g.broadcast_rows(ins[0].value.rows())?],
        SumCols(_) => vec![g.broadcast_cols(ins[0].value.cols())?],
        BroadcastScalar(_) => vec![g.sum()?.reshape(ins[0].shape().to_vec())?],
        BroadcastRows(_) => vec![g.sum_rows()?],
        BroadcastCols(_) => vec![g.sum_cols()?],
        MaskMul(_, mask) => vec![g.mask_mul(Rc::clone(mask))?],
        Tanh(_) => {
            // 1 - y^2
            let d = out.square().neg().add_scalar(1.0);
            vec![g.mul(&d)?]
        }
        Sigmoid(_) => {
            let d = out.mul(&out.neg().add_scalar(1.0))?;
            vec![g.mul(&d)?]
        }
        Softplus(_) => vec![g.mul(&ins[0].sigmoid())?],
        Exp(_) => vec![g.mul(out)?],
        Log(_) => vec![g.mul(&ins[0].recip())?],
        Sqrt(_) => vec![g.mul(&out.recip())?.scale(0.5)],
        Recip(_) => vec![g.mul(&out.square())?.neg()],
        Square(_) => vec![g.mul(&ins[0])?.scale(2.0)],
        Softmax(_) => {
            let k = out.value.cols();
            let dot = g.mul(out)?.sum_cols()?.broadcast_cols(k)?;
            vec![out.mul(&g.sub(&dot)?)?]
        }
        LogSoftmax(_) => {
            let k = out.value.cols();
            let total = g.sum_cols()?.broadcast_cols(k)?;
            vec![g.sub(&out.exp().mul(&total)?)?]
        }
        ConcatCols(_) => {
            let mut start = 0;
            let mut parts = Vec::with_capacity(ins.len());
            for input in ins {
                let w = input.value.cols();
                parts.push(g.slice_cols(start, start + w)?);
                start += w;
            }
            parts
        }
        SliceCols(_, start) => vec![g.pad_cols(*start, ins[0].value.cols())?],
        Reshape(_) => vec![g.reshape(ins[0].shape().to_vec())?],
        PadCols(_, start) => {
            let w = ins[0].value.cols();
            vec![g.slice_cols(*start, start + w)?]
        }
    })
}

/// A tensor attached to a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
    value: Rc<Tensor>,
    requires_grad: bool,
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("requires_grad", &self.requires_grad)
            .field("value", &*self.value)
            .finish()
    }
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Scalar value of a one-element var.
    pub fn item(&self) -> Result<f64> {
        self.value.item()
    }

    /// Same value, cut off from the graph.
    pub fn detach(&self) -> Var {
        self.tape.constant_rc(Rc::clone(&self.value))
    }

    fn same_tape(&self, other: &Var, op: &'static str) -> Result<()> {
        if Rc::ptr_eq(&self.tape.nodes, &other.tape.nodes) {
            Ok(())
        } else {
            Err(AutodiffError::Contract(format!(
                "{op}: operands live on different tapes"
            )))
        }
    }

    fn unary(&self, value: Tensor, op: Op) -> Var {
        if self.requires_grad {
            self.tape.push(value, op, true)
        } else {
            self.tape.push(value, Op::Leaf, false)
        }
    }

    fn binary(&self, other: &Var, value: Tensor, op: Op) -> Var {
        if self.requires_grad || other.requires_grad {
            self.tape.push(value, op, true)
        } else {
            self.tape.push(value, Op::Leaf, false)
        }
    }

    fn check_same_shape(&self, other: &Var, op: &'static str) -> Result<()> {
        self.same_tape(other, op)?;
        if self.shape() != other.shape() {
            return Err(AutodiffError::Dimension {
                op,
                shapes: vec![self.shape().to_vec(), other.shape().to_vec()],
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        self.check_same_shape(other, "add")?;
        let v = self.value.zip_with(&other.value, "add", |a, b| a + b)?;
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        self.check_same_shape(other, "sub")?;
        let v = self.value.zip_with(&other.value, "sub", |a, b| a - b)?;
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var) -> Result<Var> {
        self.check_same_shape(other, "mul")?;
        let v = self.value.zip_with(&other.value, "mul", |a, b| a * b)?;
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    pub fn neg(&self) -> Var {
        self.unary(self.value.map(|v| -v), Op::Neg(self.id))
    }

    pub fn scale(&self, c: f64) -> Var {
        self.unary(self.value.map(|v| v * c), Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.unary(self.value.map(|v| v + c), Op::AddScalar(self.id))
    }

    pub fn matmul(&self, other: &Var) -> Result<Var> {
        self.same_tape(other, "matmul")?;
        let v = self.value.matmul(&other.value)?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn transpose(&self) -> Result<Var> {
        Ok(self.unary(self.value.transpose()?, Op::Transpose(self.id)))
    }

    /// Adds a `[1, k]` (or `[k]`) bias to every row of an `[n, k]` matrix.
    pub fn add_bias(&self, bias: &Var) -> Result<Var> {
        self.same_tape(bias, "add_bias")?;
        let (n, k) = self.value.dims2("add_bias")?;
        let ok = matches!(bias.shape(), [1, c] if *c == k) || matches!(bias.shape(), [c] if *c == k);
        if !ok {
            return Err(AutodiffError::Dimension {
                op: "add_bias",
                shapes: vec![self.shape().to_vec(), bias.shape().to_vec()],
            });
        }
        let mut data = self.value.data().to_vec();
        let b = bias.value.data();
        for i in 0..n {
            for (x, bj) in data[i * k..(i + 1) * k].iter_mut().zip(b) {
                *x += bj;
            }
        }
        let v = Tensor::new(vec![n, k], data)?;
        Ok(self.binary(bias, v, Op::AddBias(self.id, bias.id)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Result<Var> {
        Ok(self.unary(Tensor::scalar(self.value.sum()), Op::SumAll(self.id)))
    }

    pub fn mean(&self) -> Result<Var> {
        let n = self.value.len();
        if n == 0 {
            return Err(AutodiffError::Contract("mean of an empty tensor".into()));
        }
        Ok(self.sum()?.scale(1.0 / n as f64))
    }

    /// Column sums of an `[n, k]` matrix, shape `[1, k]`.
    pub fn sum_rows(&self) -> Result<Var> {
        let (n, k) = self.value.dims2("sum_rows")?;
        let mut out = vec![0.0; k];
        for i in 0..n {
            for (o, v) in out.iter_mut().zip(self.value.row(i)) {
                *o += v;
            }
        }
        Ok(self.unary(Tensor::new(vec![1, k], out)?, Op::SumRows(self.id)))
    }

    /// Row sums of an `[n, k]` matrix, shape `[n, 1]`.
    pub fn sum_cols(&self) -> Result<Var> {
        let (n, _) = self.value.dims2("sum_cols")?;
        let out = (0..n).map(|i| self.value.row(i).iter().sum()).collect();
        Ok(self.unary(Tensor::new(vec![n, 1], out)?, Op::SumCols(self.id)))
    }

    /// Repeats a one-element var into `shape`.
    pub fn broadcast_scalar(&self, shape: &[usize]) -> Result<Var> {
        let v = self.value.item()?;
        Ok(self.unary(Tensor::full(shape, v), Op::BroadcastScalar(self.id)))
    }

    /// Repeats a `[1, k]` row `n` times.
    pub fn broadcast_rows(&self, n: usize) -> Result<Var> {
        let (r, k) = self.value.dims2("broadcast_rows")?;
        if r != 1 {
            return Err(AutodiffError::Dimension {
                op: "broadcast_rows",
                shapes: vec![self.shape().to_vec()],
            });
        }
        let data = self.value.data().repeat(n);
        Ok(self.unary(Tensor::new(vec![n, k], data)?, Op::BroadcastRows(self.id)))
    }

    /// Repeats an `[n, 1]` column `k` times.
    pub fn broadcast_cols(&self, k: usize) -> Result<Var> {
        let (n, c) = self.value.dims2("broadcast_cols")?;
        if c != 1 {
            return Err(AutodiffError::Dimension {
                op: "broadcast_cols",
                shapes: vec![self.shape().to_vec()],
            });
        }
        let data = self
            .value
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, k))
            .collect();
        Ok(self.unary(Tensor::new(vec![n, k], data)?, Op::BroadcastCols(self.id)))
    }

    /// Same values under a new shape with an equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var> {
        if shape.as_slice() == self.shape() {
            return Ok(self.clone());
        }
        let v = self.value.reshape(shape)?;
        Ok(self.unary(v, Op::Reshape(self.id)))
    }

    fn mask_mul(&self, mask: Rc<Tensor>) -> Result<Var> {
        let v = self.value.zip_with(&mask, "mask_mul", |a, m| a * m)?;
        Ok(self.unary(v, Op::MaskMul(self.id, mask)))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&self, c: &Tensor) -> Result<Var> {
        self.mask_mul(Rc::new(c.clone()))
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    /// `max(x, slope * x)` for `0 <= slope < 1`. The second derivative is zero.
    pub fn leaky_relu(&self, slope: f64) -> Var {
        let mask = Rc::new(self.value.map(|v| if v > 0.0 { 1.0 } else { slope }));
        let v = self.value.map(|v| if v > 0.0 { v } else { slope * v });
        self.unary(v, Op::MaskMul(self.id, mask))
    }

    pub fn tanh(&self) -> Var {
        self.unary(self.value.map(f64::tanh), Op::Tanh(self.id))
    }

    pub fn sigmoid(&self) -> Var {
        let v = self.value.map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.unary(v, Op::Sigmoid(self.id))
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&self) -> Var {
        let v = self.value.map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.unary(v, Op::Softplus(self.id))
    }

    pub fn exp(&self) -> Var {
        self.unary(self.value.map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(&self) -> Var {
        self.unary(self.value.map(f64::ln), Op::Log(self.id))
    }

    pub fn sqrt(&self) -> Var {
        self.unary(self.value.map(f64::sqrt), Op::Sqrt(self.id))
    }

    /// `1 / x`, with the reciprocal of an exact zero taken as zero.
    pub fn recip(&self) -> Var {
        let v = self.value.map(|x| if x == 0.0 { 0.0 } else { 1.0 / x });
        self.unary(v, Op::Recip(self.id))
    }

    pub fn square(&self) -> Var {
        self.unary(self.value.map(|v| v * v), Op::Square(self.id))
    }

    /// Row-wise softmax.
    pub fn softmax(&self) -> Result<Var> {
        Ok(self.unary(self.value.softmax_rows()?, Op::Softmax(self.id)))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self) -> Result<Var> {
        Ok(self.unary(self.value.log_softmax_rows()?, Op::LogSoftmax(self.id)))
    }

    /// Euclidean norm of each row, shape `[n, 1]`.
    pub fn row_norm(&self) -> Result<Var> {
        Ok(self.square().sum_cols()?.sqrt())
    }

    pub fn concat_cols(parts: &[&Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::Contract("concat_cols of nothing".into()))?;
        for p in &parts[1..] {
            first.same_tape(p, "concat_cols")?;
        }
        let values: Vec<&Tensor> = parts.iter().map(|p| &*p.value).collect();
        let v = Tensor::concat_cols(&values)?;
        let requires_grad = parts.iter().any(|p| p.requires_grad);
        let op = if requires_grad {
            Op::ConcatCols(parts.iter().map(|p| p.id).collect())
        } else {
            Op::Leaf
        };
        Ok(first.tape.push(v, op, requires_grad))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var> {
        let v = self.value.slice_cols(start, end)?;
        Ok(self.unary(v, Op::SliceCols(self.id, start)))
    }

    /// Places this matrix at column `start` of a zero matrix `total` columns wide.
    pub fn pad_cols(&self, start: usize, total: usize) -> Result<Var> {
        let (n, w) = self.value.dims2("pad_cols")?;
        if start + w > total {
            return Err(AutodiffError::Contract(format!(
                "pad_cols: {w} columns at {start} exceed width {total}"
            )));
        }
        let mut data = vec![0.0; n * total];
        for i in 0..n {
            data[i * total + start..i * total + start + w].copy_from_slice(self.value.row(i));
        }
        Ok(self.unary(Tensor::new(vec![n, total], data)?, Op::PadCols(self.id, start)))
    }
}
