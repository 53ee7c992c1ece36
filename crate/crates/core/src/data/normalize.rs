use priorgan_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// `[-1, 1]`
    Signed,
    /// `[0, 1]`
    Unit,
}

impl NormMode {
    pub fn range(self) -> (f64, f64) {
        match self {
            NormMode::Signed => (-1.0, 1.0),
            NormMode::Unit => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScope {
    /// One min/max over all features (images).
    Global,
    PerFeature,
}

/// An affine map from source ranges onto the mode's target range.
///
/// A feature whose source range is empty (constant on the fitting data) maps
/// to the midpoint of the target range; inverting such a feature returns the
/// fitted constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    /// Per-feature source minima (one entry per feature, shared for global scope).
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    /// Fits source ranges on `train`.
    pub fn fit(train: &Tensor, mode: NormMode, scope: NormScope) -> Result<Self> {
        let (n, d) = train.dims2("normalize")?;
        if n == 0 {
            return Err(Error::contract("cannot fit a normalizer on zero samples"));
        }
        let (lo, hi) = match scope {
            NormScope::Global => {
                let lo = train.data().iter().copied().fold(f64::INFINITY, f64::min);
                let hi = train.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (vec![lo; d], vec![hi; d])
            }
            NormScope::PerFeature => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for i in 0..n {
                    for (j, &v) in train.row(i).iter().enumerate() {
                        lo[j] = lo[j].min(v);
                        hi[j] = hi[j].max(v);
                    }
                }
                (lo, hi)
            }
        };
        Ok(Self { mode, lo, hi })
    }

    /// A known source range shared by `dim` features, e.g. `[0, 255]` pixels.
    pub fn fixed(mode: NormMode, dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            mode,
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (n, d) = x.dims2("normalize")?;
        if d != self.lo.len() {
            return Err(Error::contract(format!(
                "normalizer fitted on {} features applied to {d}",
                self.lo.len()
            )));
        }
        Ok((n, d))
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (n, d) = self.check(x)?;
        let (a, b) = self.mode.range();
        let mut out = x.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                let v = &mut out[i * d + j];
                let width = self.hi[j] - self.lo[j];
                let u = if width > 0.0 { (*v - self.lo[j]) / width } else { 0.5 };
                *v = a + (b - a) * u;
            }
        }
        Ok(Tensor::matrix(n, d, out)?)
    }

    pub fn invert(&self, y: &Tensor) -> Result<Tensor> {
        let (n, d) = self.check(y)?;
        let (a, b) = self.mode.range();
        let mut out = y.data().to_vec();
        for i in 0..n {
            for j in 0..d {
                let v = &mut out[i * d + j];
                let u = (*v - a) / (b - a);
                *v = self.lo[j] + u * (self.hi[j] - self.lo[j]);
            }
        }
        Ok(Tensor::matrix(n, d, out)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pixel_endpoints() {
        let x = Tensor::from_rows(&[[0.0, 127.5, 255.0]]).unwrap();
        let signed = Normalizer::fixed(NormMode::Signed, 3, 0.0, 255.0).apply(&x).unwrap();
        assert_eq!(signed.data(), &[-1.0, 0.0, 1.0]);
        for v in [3.0, 17.0, 200.0] {
            let y = Normalizer::fixed(NormMode::Signed, 1, 0.0, 255.0)
                .apply(&Tensor::from_rows(&[[v]]).unwrap())
                .unwrap();
            assert!((y.item().unwrap() - (v / 127.5 - 1.0)).abs() < 1e-15);
        }
        let unit = Normalizer::fixed(NormMode::Unit, 3, 0.0, 255.0).apply(&x).unwrap();
        assert_eq!(unit.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn test_values_beyond_train_range_may_exceed_one() {
        let train = Tensor::from_rows(&[[0.0, 5.0], [10.0, 7.0]]).unwrap();
        let norm = Normalizer::fit(&train, NormMode::Signed, NormScope::PerFeature).unwrap();
        let fitted = norm.apply(&train).unwrap();
        assert!(fitted.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let test = Tensor::from_rows(&[[15.0, 6.0]]).unwrap();
        let y = norm.apply(&test).unwrap();
        assert_eq!(y.data(), &[2.0, 0.0]);
    }

    #[test]
    fn constant_feature_maps_to_midpoint() {
        let train = Tensor::from_rows(&[[3.0, 1.0], [3.0, 2.0]]).unwrap();
        for (mode, mid) in [(NormMode::Signed, 0.0), (NormMode::Unit, 0.5)] {
            let norm = Normalizer::fit(&train, mode, NormScope::PerFeature).unwrap();
            let y = norm.apply(&train).unwrap();
            assert_eq!((y.get(0, 0), y.get(1, 0)), (mid, mid));
            assert_eq!(norm.invert(&y).unwrap(), train);
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let norm = Normalizer::fixed(NormMode::Unit, 2, 0.0, 1.0);
        assert!(norm.apply(&Tensor::zeros(&[1, 3])).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(values in prop::collection::vec(-1e3f64..1e3, 12), signed in any::<bool>(), global in any::<bool>()) {
            let x = Tensor::matrix(4, 3, values).unwrap();
            let mode = if signed { NormMode::Signed } else { NormMode::Unit };
            let scope = if global { NormScope::Global } else { NormScope::PerFeature };
            let norm = Normalizer::fit(&x, mode, scope).unwrap();
            let y = norm.apply(&x).unwrap();
            let (a, b) = mode.range();
            prop_assert!(y.data().iter().all(|v| *v >= a - 1e-12 && *v <= b + 1e-12));
            let back = norm.invert(&y).unwrap();
            for (p, q) in back.data().iter().zip(x.data()) {
                prop_assert!((p - q).abs() <= 1e-12 * q.abs().max(1.0));
            }
        }
    }
}
