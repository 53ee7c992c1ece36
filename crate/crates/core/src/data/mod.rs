//! Datasets: IDX and CSV loaders, synthetic blobs, imbalance subsampling,
//! normalization and stratified train/test splits.

mod idx;
mod imbalance;
mod normalize;
mod synth;
mod tabular;

use priorgan_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use imbalance::{subsample_imbalanced, ClassFraction, ImbalanceSpec};
pub use normalize::{NormMode, NormScope, Normalizer};
pub use synth::{synth_blobs, BlobSpec, Blobs};
pub use tabular::{load_csv, CsvSchema};

/// Default held-out fraction.
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// A feature matrix with optional labels. Labels are only ever used for
/// evaluation and subsampling, never for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[N, d]`
    pub features: Tensor,
    pub labels: Option<Vec<usize>>,
    pub classes: usize,
    /// `(height, width)` for image data; `d == height * width`.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Option<Vec<usize>>,
        classes: usize,
        image_shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        let (n, d) = features.dims2("dataset")?;
        if classes == 0 {
            return Err(Error::contract("a dataset needs at least one class"));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::contract(format!("{} labels for {n} samples", labels.len())));
            }
            if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
                return Err(Error::contract(format!(
                    "label {l} at sample {i} out of range for {classes} classes"
                )));
            }
        }
        if let Some((h, w)) = image_shape {
            if h * w != d {
                return Err(Error::contract(format!("image shape {h}x{w} does not match d={d}")));
            }
        }
        Ok(Self {
            features,
            labels,
            classes,
            image_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::contract("dataset has no labels"))
    }

    /// Samples per class; requires labels.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.classes];
        for &l in self.labels()? {
            counts[l] += 1;
        }
        Ok(counts)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            classes: self.classes,
            image_shape: self.image_shape,
        }
    }
}

/// Disjoint train/test index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holds out `round(test_fraction * n_k)` samples of every class (or of the
/// whole set when unlabeled). Both index lists come back sorted.
pub fn stratified_split(data: &Dataset, test_fraction: f64, rng: &mut ChaCha8Rng) -> Result<SplitIndices> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::contract(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let groups: Vec<Vec<usize>> = match &data.labels {
        Some(labels) => {
            let mut groups = vec![Vec::new(); data.classes];
            for (i, &l) in labels.iter().enumerate() {
                groups[l].push(i);
            }
            groups
        }
        None => vec![(0..data.len()).collect()],
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut group in groups {
        group.shuffle(rng);
        let held = (test_fraction * group.len() as f64).round() as usize;
        test.extend_from_slice(&group[..held]);
        train.extend_from_slice(&group[held..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}
