use priorgan_autodiff::{Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// LeakyReLU negative slope used unless a network spec says otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "slope")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: &Var) -> Var {
        match self {
            Activation::Linear => x.clone(),
            Activation::Relu => x.relu(),
            Activation::LeakyRelu(slope) => x.leaky_relu(slope),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Splits a network's output columns into a continuous block followed by a
/// block of categorical logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSplit {
    pub continuous: usize,
    pub categorical: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Widths from input to output, inclusive.
    pub layer_dims: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    #[serde(default)]
    pub head: Option<HeadSplit>,
}

impl NetworkSpec {
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut layer_dims = vec![input];
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(output);
        Self {
            layer_dims,
            hidden_activation: Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
            output_activation: Activation::Linear,
            head: None,
        }
    }

    pub fn hidden_activation(mut self, a: Activation) -> Self {
        self.hidden_activation = a;
        self
    }

    pub fn output_activation(mut self, a: Activation) -> Self {
        self.output_activation = a;
        self
    }

    pub fn with_head(mut self, head: HeadSplit) -> Self {
        self.head = Some(head);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap_or(&0)
    }

    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::contract(format!(
                "network needs at least input and output widths, got {:?}",
                self.layer_dims
            )));
        }
        if let Some(d) = self.layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::contract(format!("layer {d} has width 0")));
        }
        if let Some(h) = self.head {
            if h.continuous + h.categorical != self.output_dim() {
                return Err(Error::contract(format!(
                    "head split {}+{} does not match output width {}",
                    h.continuous,
                    h.categorical,
                    self.output_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        for (i, (name, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::contract(format!("duplicate parameter name {name}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.entries
    }

    /// Order-sensitive checksum over names, shapes and exact bit patterns.
    pub fn checksum(&self) -> u64 {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, t) in &self.entries {
            eat(name.as_bytes());
            for d in t.shape() {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Parameters of one network placed on a tape.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Uses caller-owned vars as `net`'s parameters, in canonical order.
    pub fn from_vars(net: &Network, vars: Vec<Var>) -> Result<Self> {
        if vars.len() != net.params.len() {
            return Err(Error::contract(format!(
                "{} vars for {} parameters",
                vars.len(),
                net.params.len()
            )));
        }
        for ((name, t), v) in net.params.iter().zip(&vars) {
            if t.shape() != v.shape() {
                return Err(Error::contract(format!(
                    "{name}: expected shape {:?}, got {:?}",
                    t.shape(),
                    v.shape()
                )));
            }
        }
        Ok(Self { vars })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// A multilayer perceptron with named `layer{i}.weight` / `layer{i}.bias` parameters.
///
/// Weights are stored `[fan_in, fan_out]`, so a batch `[n, fan_in]` multiplies
/// on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: ParamSet,
}

impl Network {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn build(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let mut entries = Vec::new();
        for (i, pair) in spec.layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            entries.push((format!("layer{i}.weight"), Tensor::matrix(fan_in, fan_out, w)?));
            entries.push((format!("layer{i}.bias"), Tensor::zeros(&[1, fan_out])));
        }
        Ok(Self {
            spec,
            params: ParamSet::new(entries)?,
        })
    }

    /// Wraps existing parameters, checking names and shapes against the spec.
    pub fn from_params(spec: NetworkSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        let mut entries = Vec::with_capacity(params.len());
        for (i, pair) in spec.layer_dims.windows(2).enumerate() {
            for (name, shape) in [
                (format!("layer{i}.weight"), vec![pair[0], pair[1]]),
                (format!("layer{i}.bias"), vec![1, pair[1]]),
            ] {
                let t = params
                    .get(&name)
                    .ok_or_else(|| Error::contract(format!("missing parameter {name}")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::contract(format!(
                        "parameter {name} has shape {:?}, expected {shape:?}",
                        t.shape()
                    )));
                }
                entries.push((name, t.clone()));
            }
        }
        if entries.len() != params.len() {
            let extra: Vec<_> = params
                .iter()
                .map(|(n, _)| n)
                .filter(|n| !entries.iter().any(|(e, _)| e == n))
                .collect();
            return Err(Error::contract(format!("unexpected parameters {extra:?}")));
        }
        Ok(Self {
            spec,
            params: ParamSet::new(entries)?,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.spec.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn head(&self) -> Option<HeadSplit> {
        self.spec.head
    }

    /// Places the parameters on `tape`, as gradient leaves when `trainable`.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .tensors()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Bound { vars }
    }

    pub fn forward(&self, bound: &Bound, x: &Var) -> Result<Var> {
        let n_layers = self.spec.layer_dims.len() - 1;
        let mut h = x.clone();
        for i in 0..n_layers {
            let w = &bound.vars[2 * i];
            let b = &bound.vars[2 * i + 1];
            h = h.matmul(w)?.add_bias(b)?;
            let act = if i + 1 == n_layers {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            h = act.apply(&h);
        }
        Ok(h)
    }

    /// Inputs to each hidden activation, on plain values.
    pub fn hidden_preactivations(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let mut h = tape.constant(x.clone());
        let mut out = Vec::new();
        for i in 0..self.spec.layer_dims.len().saturating_sub(2) {
            let z = h.matmul(&bound.vars[2 * i])?.add_bias(&bound.vars[2 * i + 1])?;
            out.push(z.value().clone());
            h = self.spec.hidden_activation.apply(&z);
        }
        Ok(out)
    }

    /// Forward pass on plain values.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let out = self.forward(&bound, &tape.constant(x.clone()))?;
        Ok(out.value().clone())
    }

    /// Splits an output into `(continuous, logits)` per the head spec.
    pub fn split_head(&self, out: &Var) -> Result<(Var, Var)> {
        let head = self
            .spec
            .head
            .ok_or_else(|| Error::contract("network has no head split"))?;
        let c = out.slice_cols(0, head.continuous)?;
        let l = out.slice_cols(head.continuous, head.continuous + head.categorical)?;
        Ok((c, l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{rng_for, Stream};

    #[test]
    fn low_dim_prior_shape_has_four_weight_matrices() {
        let spec = NetworkSpec::mlp(64, &[256, 256], 10);
        let net = Network::build(spec, &mut rng_for(0, Stream::Init)).unwrap();
        let weights: Vec<_> = net
            .params()
            .iter()
            .filter(|(n, _)| n.ends_with("weight"))
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        // Four widths, three linear layers.
        assert_eq!(weights, vec![vec![64, 256], vec![256, 256], vec![256, 10]]);
    }

    #[test]
    fn identity_layer_reproduces_input() {
        let spec = NetworkSpec::mlp(3, &[], 3);
        let params = ParamSet::new(vec![
            (
                "layer0.weight".into(),
                Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap(),
            ),
            ("layer0.bias".into(), Tensor::zeros(&[1, 3])),
        ])
        .unwrap();
        let net = Network::from_params(spec, params).unwrap();
        let x = Tensor::from_rows(&[[0.5, -2.0, 3.0], [1.0, 1.0, 0.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn same_seed_same_parameters() {
        let spec = NetworkSpec::mlp(5, &[7], 2);
        let a = Network::build(spec.clone(), &mut rng_for(42, Stream::Init)).unwrap();
        let b = Network::build(spec.clone(), &mut rng_for(42, Stream::Init)).unwrap();
        let c = Network::build(spec, &mut rng_for(43, Stream::Init)).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.params().checksum(), b.params().checksum());
        assert_ne!(a.params().checksum(), c.params().checksum());
    }

    #[test]
    fn empty_dims_rejected() {
        let spec = NetworkSpec {
            layer_dims: vec![4],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
            head: None,
        };
        assert!(Network::build(spec, &mut rng_for(0, Stream::Init)).is_err());
        let spec = NetworkSpec::mlp(4, &[0], 2);
        assert!(Network::build(spec, &mut rng_for(0, Stream::Init)).is_err());
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let net = Network::build(NetworkSpec::mlp(10, &[30], 4), &mut rng_for(1, Stream::Init)).unwrap();
        let limit = (6.0_f64 / 40.0).sqrt();
        assert!(net.params().get("layer0.weight").unwrap().max_abs() <= limit);
        assert_eq!(net.params().get("layer1.bias").unwrap().max_abs(), 0.0);
    }

    #[test]
    fn head_split_widths() {
        let spec = NetworkSpec::mlp(6, &[8], 5).with_head(HeadSplit {
            continuous: 2,
            categorical: 3,
        });
        let net = Network::build(spec, &mut rng_for(0, Stream::Init)).unwrap();
        let tape = Tape::new();
        let bound = net.bind(&tape, false);
        let out = net.forward(&bound, &tape.constant(Tensor::zeros(&[4, 6]))).unwrap();
        let (c, l) = net.split_head(&out).unwrap();
        assert_eq!(c.shape(), &[4, 2]);
        assert_eq!(l.shape(), &[4, 3]);

        let bad = NetworkSpec::mlp(6, &[8], 5).with_head(HeadSplit {
            continuous: 2,
            categorical: 2,
        });
        assert!(Network::build(bad, &mut rng_for(0, Stream::Init)).is_err());
    }
}
