use priorgan_autodiff::Tensor;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

const MAX_TRIES: usize = 10_000;

/// Isotropic Gaussian blobs with centres at `spread * u_k` for random unit
/// vectors `u_k`, pairwise at least `spread / 2` apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub classes: usize,
    /// Samples per class; a single entry applies to every class.
    pub per_class: Vec<usize>,
    pub dim: usize,
    pub spread: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub data: Dataset,
    /// `[M, d]`
    pub centers: Tensor,
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Samples are grouped by class, classes in order.
pub fn synth_blobs(spec: &BlobSpec, rng: &mut ChaCha8Rng) -> Result<Blobs> {
    let BlobSpec {
        classes,
        dim,
        spread,
        noise,
        ..
    } = *spec;
    if classes == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "blobs need classes >= 1 and dim >= 1, got {classes} and {dim}"
        )));
    }
    if !(spread >= 0.0 && noise >= 0.0) {
        return Err(Error::Config(format!(
            "blob spread and noise must be non-negative, got {spread} and {noise}"
        )));
    }
    let counts = match spec.per_class.as_slice() {
        [n] => vec![*n; classes],
        list if list.len() == classes => list.to_vec(),
        list => {
            return Err(Error::Config(format!(
                "per_class has {} entries for {classes} classes",
                list.len()
            )))
        }
    };

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut tries = 0;
    while centers.len() < classes {
        if tries == MAX_TRIES {
            return Err(Error::Config(format!(
                "could not place {classes} centres at pairwise distance >= {} in {dim} dimensions after {MAX_TRIES} tries",
                spread / 2.0
            )));
        }
        tries += 1;
        let c: Vec<f64> = unit_direction(rng, dim).into_iter().map(|x| spread * x).collect();
        let far_enough = centers.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= spread / 2.0
        });
        if far_enough {
            centers.push(c);
        }
    }

    let total: usize = counts.iter().sum();
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (k, (&count, center)) in counts.iter().zip(&centers).enumerate() {
        for _ in 0..count {
            for &mu in center {
                let z: f64 = StandardNormal.sample(rng);
                features.push(mu + noise * z);
            }
            labels.push(k);
        }
    }
    Ok(Blobs {
        data: Dataset::new(Tensor::matrix(total, dim, features)?, Some(labels), classes, None)?,
        centers: Tensor::matrix(classes, dim, centers.concat())?,
    })
}
