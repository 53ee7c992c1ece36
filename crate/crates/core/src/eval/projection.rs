use nalgebra::{DMatrix, SymmetricEigen};
use priorgan_autodiff::Tensor;

use crate::error::{Error, Result};

/// Principal axes of a point cloud.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `components[i]` is the i-th unit axis, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues (divisor N), decreasing.
    pub eigenvalues: Vec<f64>,
}

pub fn pca(points: &Tensor) -> Result<Pca> {
    let (n, d) = points.dims2("pca")?;
    if n == 0 {
        return Err(Error::contract("pca of zero points"));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(points.row(i)) {
            *m += v / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| points.get(i, j) - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(Pca {
        mean,
        components: order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
            .collect(),
        eigenvalues: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// Mean-centred projection onto the two leading principal axes, `[N, 2]`.
///
/// Each axis is oriented so its largest-magnitude coordinate is positive.
pub fn project_2d(points: &Tensor) -> Result<Tensor> {
    let (n, d) = points.dims2("project_2d")?;
    if d < 2 {
        return Err(Error::contract(format!("project_2d needs D >= 2, got {d}")));
    }
    let p = pca(points)?;
    let mut cols = [vec![0.0; n], vec![0.0; n]];
    for (axis, col) in cols.iter_mut().enumerate() {
        let comp = &p.components[axis];
        for (i, out) in col.iter_mut().enumerate() {
            *out = points
                .row(i)
                .iter()
                .zip(&p.mean)
                .zip(comp)
                .map(|((x, m), c)| (x - m) * c)
                .sum();
        }
        let extreme = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if extreme < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let data = (0..n).flat_map(|i| [cols[0][i], cols[1][i]]).collect();
    Ok(Tensor::matrix(n, 2, data)?)
}
