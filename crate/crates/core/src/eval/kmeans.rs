use priorgan_autodiff::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::child_seed;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `[k, D]`
    pub centroids: Tensor,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &Tensor, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One Lloyd run from k-means++ seeding.
pub fn kmeans_single(points: &Tensor, k: usize, rng: &mut ChaCha8Rng) -> Result<KMeansResult> {
    let (n, dim) = points.dims2("kmeans")?;
    if k == 0 || n < k {
        return Err(Error::contract(format!("kmeans needs N >= k >= 1, got N={n}, k={k}")));
    }
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (j, d) = nearest(points.row(i), &centroids);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
            dists[i] = d;
            inertia += d;
        }
        history.push(inertia);
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            } else {
                // Reseed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .unwrap_or(0);
                taken[far] = true;
                centroids[j] = points.row(far).to_vec();
            }
        }
    }
    let inertia = *history.last().unwrap_or(&0.0);
    Ok(KMeansResult {
        labels,
        centroids: Tensor::matrix(k, dim, centroids.concat())?,
        inertia,
        history,
    })
}

/// Best of `restarts` runs by final inertia; each restart gets its own seed.
pub fn kmeans(points: &Tensor, k: usize, restarts: usize, rng: &mut ChaCha8Rng) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let mut run_rng = crate::seed::rng_for(child_seed(rng), crate::seed::Stream::Eval);
        let run = kmeans_single(points, k, &mut run_rng)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
