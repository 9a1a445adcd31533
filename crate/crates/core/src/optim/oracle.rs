//! Closed-form minimizer of the full-batch squared losses.
//!
//! `min_s sum_r (s_hw - s_hl - t_r)^2` has normal equations `L s = b` with
//! `L` the pair-graph Laplacian. `L` is singular along the all-ones
//! direction, so the solve uses `L + 1 1^T / n`, whose solution is the
//! zero-sum minimizer.

use nalgebra::{DMatrix, DVector};

use crate::dataset::PreferenceRecord;
use crate::error::{invalid, Error, Result};
use crate::losses::LossKind;
use crate::policy::center;

/// Zero-sum score vector minimizing the squared loss of `kind` over `records`.
pub fn least_squares_oracle(records: &[PreferenceRecord], n: usize, kind: &LossKind) -> Result<Vec<f64>> {
    if !kind.is_squared() {
        return Err(invalid(format!("{} has no squared target; the oracle covers bfpo and ipo", kind.name())));
    }
    kind.validate()?;
    if n == 0 || records.is_empty() {
        return Err(invalid("oracle needs actions and records"));
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let mut parent: Vec<usize> = (0..n).collect();
    for r in records {
        r.validate()?;
        if r.first >= n || r.second >= n {
            return Err(invalid(format!("record ({}, {}) out of range for {n} actions", r.first, r.second)));
        }
        let o = r.oriented();
        let t = kind.target(&o).expect("squared loss has a target");
        lap[(o.hw, o.hw)] += 1.0;
        lap[(o.hl, o.hl)] += 1.0;
        lap[(o.hw, o.hl)] -= 1.0;
        lap[(o.hl, o.hw)] -= 1.0;
        b[o.hw] += t;
        b[o.hl] -= t;
        let (a, c) = (find(&mut parent, o.hw), find(&mut parent, o.hl));
        parent[a] = c;
    }
    let root = find(&mut parent, 0);
    if (1..n).any(|k| find(&mut parent, k) != root) {
        return Err(Error::Underdetermined("pair graph is disconnected; scores are not identified".into()));
    }
    lap.add_scalar_mut(1.0 / n as f64);
    let s = lap.lu().solve(&b).ok_or_else(|| Error::Underdetermined("normal equations are singular".into()))?;
    Ok(center(s.as_slice()))
}

fn find(parent: &mut [usize], mut k: usize) -> usize {
    while parent[k] != k {
        parent[k] = parent[parent[k]];
        k = parent[k];
    }
    k
}

/// `theta - ref`, projected to zero sum.
pub fn implied_scores(theta: &[f64], reference: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = theta.iter().zip(reference).map(|(a, b)| a - b).collect();
    center(&d)
}
