use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassFraction {
    pub class: usize,
    pub fraction: f64,
}

/// Per-class retention fractions; classes not listed keep everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImbalanceSpec(pub Vec<ClassFraction>);

impl ImbalanceSpec {
    pub fn single(class: usize, fraction: f64) -> Self {
        Self(vec![ClassFraction { class, fraction }])
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|c| c.fraction == 1.0)
    }

    fn fractions(&self, classes: usize) -> Result<Vec<f64>> {
        let mut out = vec![1.0; classes];
        for &ClassFraction { class, fraction } in &self.0 {
            if class >= classes {
                return Err(Error::contract(format!(
                    "imbalance class {class} out of range for {classes} classes"
                )));
            }
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::contract(format!(
                    "imbalance fraction {fraction} for class {class} outside (0, 1]"
                )));
            }
            out[class] = fraction;
        }
        Ok(out)
    }
}

/// Keeps `ceil(fraction_k * n_k)` uniformly chosen samples of each class,
/// preserving the original order.
pub fn subsample_imbalanced(data: &Dataset, spec: &ImbalanceSpec, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let fractions = spec.fractions(data.classes)?;
    let labels = data.labels()?;
    let mut members = vec![Vec::new(); data.classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let mut keep = Vec::with_capacity(labels.len());
    for (k, (group, &f)) in members.iter().zip(&fractions).enumerate() {
        if f == 1.0 {
            keep.extend_from_slice(group);
            continue;
        }
        let exact = f * group.len() as f64;
        if exact < 1.0 {
            return Err(Error::contract(format!(
                "fraction {f} of class {k} ({} samples) would empty the class",
                group.len()
            )));
        }
        let retained = exact.ceil() as usize;
        keep.extend(sample(rng, group.len(), retained).into_iter().map(|j| group[j]));
    }
    keep.sort_unstable();
    Ok(data.select(&keep))
}
