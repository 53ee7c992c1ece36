use priorgan_autodiff::{Tensor, Var};

use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-9;

fn validate(probs: &Tensor) -> Result<(usize, usize)> {
    let (n, m) = probs.dims2("entropy")?;
    if n == 0 {
        return Err(Error::contract("entropy of an empty batch"));
    }
    for i in 0..n {
        let row = probs.row(i);
        if let Some(v) = row.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::contract(format!("row {i} has invalid probability {v}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::contract(format!("row {i} sums to {s}, not 1")));
        }
    }
    Ok((n, m))
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// Mean per-row entropy, `H(Y|X)` in nats.
pub fn conditional_entropy(probs: &Tensor) -> Result<f64> {
    let (n, _) = validate(probs)?;
    Ok((0..n).map(|i| entropy(probs.row(i))).sum::<f64>() / n as f64)
}

/// Entropy of the row-averaged distribution, `H(Y)` in nats.
pub fn marginal_entropy(probs: &Tensor) -> Result<f64> {
    let (n, m) = validate(probs)?;
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (a, v) in mean.iter_mut().zip(probs.row(i)) {
            *a += v / n as f64;
        }
    }
    Ok(entropy(&mean))
}

/// Differentiable `H(Y|X)` from row log-probabilities.
pub fn conditional_entropy_var(log_probs: &Var) -> Result<Var> {
    let n = log_probs.shape()[0] as f64;
    Ok(log_probs.exp().mul(log_probs)?.sum()?.scale(-1.0 / n))
}

/// Differentiable `H(Y)` from row probabilities.
pub fn marginal_entropy_var(probs: &Var) -> Result<Var> {
    let n = probs.shape()[0] as f64;
    let mean = probs.sum_rows()?.scale(1.0 / n);
    // The floor keeps an underflowed class from producing 0 * -inf.
    let log_mean = mean.add_scalar(f64::MIN_POSITIVE).ln();
    Ok(mean.mul(&log_mean)?.sum()?.neg())
}

#[cfg(test)]
mod tests {
    use super::*;
    use priorgan_autodiff::Tape;

    #[test]
    fn conditional_examples() {
        let one_hot = Tensor::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(conditional_entropy(&one_hot).unwrap(), 0.0);
        let uniform = Tensor::full(&[4, 10], 0.1);
        assert!((conditional_entropy(&uniform).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mixed = Tensor::from_rows(&[[0.5, 0.5], [1.0, 0.0]]).unwrap();
        assert!((conditional_entropy(&mixed).unwrap() - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn marginal_examples() {
        let p = Tensor::from_rows(&[[0.2, 0.3, 0.5], [0.2, 0.3, 0.5]]).unwrap();
        assert!((marginal_entropy(&p).unwrap() - conditional_entropy(&p).unwrap()).abs() < 1e-15);
        let balanced = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!((marginal_entropy(&balanced).unwrap() - 3f64.ln()).abs() < 1e-12);
        let skewed = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!((marginal_entropy(&skewed).unwrap() - 0.562_335_144_618_551_5).abs() < 1e-12);
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        assert!(conditional_entropy(&Tensor::from_rows(&[[0.5, 0.6]]).unwrap()).is_err());
        assert!(marginal_entropy(&Tensor::from_rows(&[[1.5, -0.5]]).unwrap()).is_err());
        assert!(marginal_entropy(&Tensor::from_rows(&[[f64::NAN, 1.0]]).unwrap()).is_err());
    }

    #[test]
    fn var_versions_agree_with_tensor_versions() {
        let logits = Tensor::from_rows(&[[0.3, -1.0, 2.0], [1.0, 1.0, -0.5], [0.0, 4.0, 0.1]]).unwrap();
        let probs = logits.softmax_rows().unwrap();
        let tape = Tape::new();
        let z = tape.leaf(logits);
        let h_cond = conditional_entropy_var(&z.log_softmax().unwrap()).unwrap();
        let h_marg = marginal_entropy_var(&z.softmax().unwrap()).unwrap();
        assert!((h_cond.item().unwrap() - conditional_entropy(&probs).unwrap()).abs() < 1e-12);
        assert!((h_marg.item().unwrap() - marginal_entropy(&probs).unwrap()).abs() < 1e-12);
    }
}
