use priorgan_autodiff::Tensor;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::metrics::{contingency, hungarian_acc, nmi};
use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub acc: f64,
    pub nmi: f64,
    /// `permutation[cluster] = class`.
    pub permutation: Vec<usize>,
    /// `confusion[true_class][cluster]`, row-major.
    pub confusion: Vec<usize>,
    pub classes: usize,
    /// Samples per class after mapping clusters through `permutation`.
    pub mode_frequencies: Vec<usize>,
    pub predicted_labels: Vec<usize>,
}

impl ClusterReport {
    /// Scores a clustering against ground truth.
    pub fn score(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        let (acc, permutation) = hungarian_acc(truth, pred, classes)?;
        let table = contingency(truth, pred, classes)?;
        let mut mode_frequencies = vec![0; classes];
        for &p in pred {
            mode_frequencies[permutation[p]] += 1;
        }
        Ok(Self {
            acc,
            nmi: nmi(truth, pred)?,
            permutation,
            confusion: table.concat(),
            classes,
            mode_frequencies,
            predicted_labels: pred.to_vec(),
        })
    }

    pub fn confusion_at(&self, class: usize, cluster: usize) -> usize {
        self.confusion[class * self.classes + cluster]
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::contract(e.to_string()))
    }

    pub const CSV_HEADER: &'static str = "acc,nmi,permutation,mode_frequencies";

    /// One CSV row; list-valued fields are `;`-separated.
    pub fn csv_row(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
        format!(
            "{},{},{},{}",
            self.acc,
            self.nmi,
            join(&self.permutation),
            join(&self.mode_frequencies)
        )
    }
}

/// Encoder output as clustering features: `[z_n_hat | softmax(logits)]`.
pub fn encoded_features(encoder: &Network, x: &Tensor) -> Result<Tensor> {
    let head = encoder
        .head()
        .ok_or_else(|| Error::contract("encoder has no continuous/categorical head split"))?;
    let out = encoder.predict(x)?;
    let cont = out.slice_cols(0, head.continuous)?;
    let probs = out
        .slice_cols(head.continuous, head.continuous + head.categorical)?
        .softmax_rows()?;
    Ok(Tensor::concat_cols(&[&cont, &probs])?)
}

/// Encodes a split, clusters it with k-means (k = `classes`) and scores it.
pub fn encode_and_score(
    encoder: &Network,
    x: &Tensor,
    truth: &[usize],
    classes: usize,
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterReport> {
    let features = encoded_features(encoder, x)?;
    let km = kmeans(&features, classes, restarts, rng)?;
    ClusterReport::score(truth, &km.labels, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    /// Per conditioning class: the class the oracle assigns most often.
    pub plurality: Vec<usize>,
    /// Per conditioning class: fraction of samples in the plurality class.
    pub purity: Vec<f64>,
    /// Number of distinct plurality classes.
    pub coverage: usize,
}

impl ModeCoverage {
    pub fn min_purity(&self) -> f64 {
        self.purity.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Mode statistics for samples generated per conditioning class.
///
/// `batches[k]` holds samples generated for class `k`; `oracle` maps each row
/// of a batch to one of `classes` classes.
pub fn mode_coverage(
    oracle: &dyn Fn(&Tensor) -> Vec<usize>,
    batches: &[Tensor],
    classes: usize,
) -> Result<ModeCoverage> {
    let mut plurality = Vec::with_capacity(batches.len());
    let mut purity = Vec::with_capacity(batches.len());
    for batch in batches {
        let labels = oracle(batch);
        if labels.is_empty() {
            return Err(Error::contract("empty generated batch"));
        }
        let mut counts = vec![0usize; classes];
        for l in labels.iter() {
            *counts
                .get_mut(*l)
                .ok_or_else(|| Error::contract(format!("oracle class {l} out of range")))? += 1;
        }
        let (best, &count) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("classes > 0");
        plurality.push(best);
        purity.push(count as f64 / labels.len() as f64);
    }
    let mut distinct = plurality.clone();
    distinct.sort_unstable();
    distinct.dedup();
    Ok(ModeCoverage {
        plurality,
        purity,
        coverage: distinct.len(),
    })
}

/// Index of the nearest centroid for each row: the oracle on synthetic data.
pub fn nearest_centroid(centroids: &Tensor, x: &Tensor) -> Vec<usize> {
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let mut best = (0, f64::INFINITY);
            for k in 0..centroids.rows() {
                let d: f64 = row.iter().zip(centroids.row(k)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect()
}
