use crate::error::{Error, Result};

/// `table[true][pred]` counts over `classes x classes`.
pub fn contingency(truth: &[usize], pred: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != pred.len() {
        return Err(Error::contract(format!(
            "label length mismatch: {} true vs {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    let mut table = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= classes || p >= classes {
            return Err(Error::contract(format!(
                "label pair ({t}, {p}) out of range for {classes} classes"
            )));
        }
        table[t][p] += 1;
    }
    Ok(table)
}

/// Minimum-cost perfect assignment on a square matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns `assignment[row] = column`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based bookkeeping; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[r - 1][j - 1] - u[r] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            assignment[row_of_col[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Clustering accuracy under the best cluster-to-class bijection.
///
/// Returns `(acc, permutation)` with `permutation[cluster] = class`.
pub fn hungarian_acc(truth: &[usize], pred: &[usize], classes: usize) -> Result<(f64, Vec<usize>)> {
    let table = contingency(truth, pred, classes)?;
    if truth.is_empty() {
        return Err(Error::contract("accuracy of an empty labeling"));
    }
    // Rows are clusters, columns classes; maximize matches.
    let cost: Vec<Vec<f64>> = (0..classes)
        .map(|c| (0..classes).map(|y| -(table[y][c] as f64)).collect())
        .collect();
    let perm = min_cost_assignment(&cost);
    let hits: usize = perm.iter().enumerate().map(|(c, &y)| table[y][c]).sum();
    Ok((hits as f64 / truth.len() as f64, perm))
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `2 I(Y; C) / (H(Y) + H(C))` in nats.
///
/// Labels may be any indices; they need not share a range. Returns 0 when
/// both labelings are constant.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::contract(format!(
            "label length mismatch: {} true vs {} predicted",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::contract("nmi of empty labelings"));
    }
    let rows = truth.iter().max().map_or(0, |m| m + 1);
    let cols = pred.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0usize; cols]; rows];
    for (&t, &p) in truth.iter().zip(pred) {
        joint[t][p] += 1;
    }
    let n = truth.len() as f64;
    let row_counts: Vec<usize> = joint.iter().map(|r| r.iter().sum()).collect();
    let col_counts: Vec<usize> = (0..cols).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let h_true = entropy_of_counts(row_counts.iter().copied(), n);
    let h_pred = entropy_of_counts(col_counts.iter().copied(), n);
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (row_counts[i] as f64 * col_counts[j] as f64)).ln();
            }
        }
    }
    let denom = h_true + h_pred;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((2.0 * mi / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_labels_score_one() {
        let y = [0, 1, 2, 2, 1, 0, 3];
        assert_eq!(hungarian_acc(&y, &y, 4).unwrap().0, 1.0);
        assert!((nmi(&y, &y).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cyclic_shift_is_recovered() {
        let y: Vec<usize> = (0..30).map(|i| i % 5).collect();
        let shifted: Vec<usize> = y.iter().map(|c| (c + 2) % 5).collect();
        let (acc, perm) = hungarian_acc(&y, &shifted, 5).unwrap();
        assert_eq!(acc, 1.0);
        for c in 0..5 {
            assert_eq!(perm[(c + 2) % 5], c);
        }
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        assert!(hungarian_acc(&[0, 1], &[0, 2], 2).is_err());
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn two_by_two_table_by_hand() {
        // Table [[2,1],[1,2]] over n = 6.
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0, 0, 1, 0, 1, 1];
        let n = 6.0_f64;
        let h = -(0.5_f64 * 0.5_f64.ln()) * 2.0;
        let p_diag = 2.0 / n;
        let p_off = 1.0 / n;
        let mi = 2.0 * p_diag * (p_diag / 0.25).ln() + 2.0 * p_off * (p_off / 0.25).ln();
        let expected = 2.0 * mi / (2.0 * h);
        assert!((nmi(&truth, &pred).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn constant_labelings_score_zero() {
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 1, 0, 1], &[3, 3, 3, 3]).unwrap(), 0.0);
    }
}
