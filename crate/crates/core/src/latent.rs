//! The continuous-discrete latent prior: Gaussian `z_n` concatenated with a
//! one-hot (or, for interpolation, convex) categorical `z_M`.

use priorgan_autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Network;

/// Default standard deviation of the continuous part.
pub const DEFAULT_SIGMA: f64 = 0.1;

pub fn one_hot(class: usize, classes: usize) -> Result<Vec<f64>> {
    if class >= classes {
        return Err(Error::contract(format!(
            "class index {class} out of range for {classes} classes"
        )));
    }
    let mut v = vec![0.0; classes];
    v[class] = 1.0;
    Ok(v)
}

/// One-hot rows for a batch of class indices, shape `[n, classes]`.
pub fn one_hot_batch(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(labels.len() * classes);
    for &c in labels {
        data.extend(one_hot(c, classes)?);
    }
    Ok(Tensor::matrix(labels.len(), classes, data)?)
}

/// Where the categorical part of a latent batch comes from.
#[derive(Clone, Copy)]
pub enum ClassSource<'a> {
    /// Uniform over all classes.
    Uniform,
    /// Hard assignments of a prior network on a batch of real samples; one
    /// latent code per sample, classes copied rather than re-sampled.
    Prior { net: &'a Network, data: &'a Tensor },
    /// Explicit class indices, one per latent code.
    Fixed(&'a [usize]),
}

/// A batch of latent codes.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    /// `[n, d_n]` Gaussian part.
    pub continuous: Tensor,
    /// `[n, M]` categorical part.
    pub categorical: Tensor,
    pub classes: Vec<usize>,
}

impl LatentBatch {
    /// `[continuous | categorical]`, shape `[n, d_n + M]`.
    pub fn concat(&self) -> Result<Tensor> {
        Ok(Tensor::concat_cols(&[&self.continuous, &self.categorical])?)
    }
}

/// Hard assignments `argmax P(y|x)`, ties to the lowest index.
pub fn prior_assignments(net: &Network, data: &Tensor) -> Result<Vec<usize>> {
    Ok(net.predict(data)?.argmax_rows())
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma: f64) -> Result<Tensor> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::contract(format!("sigma must be positive, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::contract(e.to_string()))?;
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Ok(Tensor::matrix(rows, cols, data)?)
}

/// Draws `batch` latent codes. For `Prior` and `Fixed` sources the batch size
/// is the number of supplied samples / indices and `batch` must agree.
pub fn sample_latent(
    rng: &mut ChaCha8Rng,
    batch: usize,
    continuous_dim: usize,
    classes: usize,
    sigma: f64,
    source: ClassSource<'_>,
) -> Result<LatentBatch> {
    if classes == 0 {
        return Err(Error::contract("need at least one class"));
    }
    let labels = match source {
        ClassSource::Uniform => (0..batch).map(|_| rng.random_range(0..classes)).collect(),
        ClassSource::Prior { net, data } => prior_assignments(net, data)?,
        ClassSource::Fixed(list) => list.to_vec(),
    };
    if labels.len() != batch {
        return Err(Error::contract(format!(
            "class source supplied {} classes for a batch of {batch}",
            labels.len()
        )));
    }
    let continuous = gaussian(rng, batch, continuous_dim, sigma)?;
    let categorical = one_hot_batch(&labels, classes)?;
    Ok(LatentBatch {
        continuous,
        categorical,
        classes: labels,
    })
}

/// A single latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub continuous: Vec<f64>,
    pub categorical: Vec<f64>,
}

impl LatentCode {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.continuous.clone();
        v.extend_from_slice(&self.categorical);
        v
    }
}

/// `(z_n, tau * onehot(a) + (1 - tau) * onehot(b))`.
pub fn interpolate(continuous: &[f64], class_a: usize, class_b: usize, tau: f64, classes: usize) -> Result<LatentCode> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::contract(format!("tau {tau} outside [0, 1]")));
    }
    let a = one_hot(class_a, classes)?;
    let b = one_hot(class_b, classes)?;
    Ok(LatentCode {
        continuous: continuous.to_vec(),
        categorical: a.iter().zip(&b).map(|(x, y)| tau * x + (1.0 - tau) * y).collect(),
    })
}

/// `steps` evenly spaced values from 0 to 1 inclusive.
pub fn linspace01(steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect(),
    }
}
