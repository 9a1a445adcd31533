//! Ground-truth preference models.
//!
//! A [`GroundTruth`] holds the pairwise helpfulness preference matrix
//! `help_pref[i][j] = p*_help(y_i > y_j)` and the per-action safety
//! probabilities `safe_prob[i] = p*_safe(y_i)`. Self-comparison is fixed at
//! one half, which makes `E_{y'~pi}[p*_help(y' > pi)] = 1/2` hold exactly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const COMPLEMENT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroundTruth")]
pub struct GroundTruth {
    help_pref: Vec<Vec<f64>>,
    safe_prob: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroundTruth {
    help_pref: Vec<Vec<f64>>,
    safe_prob: Vec<f64>,
}

impl TryFrom<RawGroundTruth> for GroundTruth {
    type Error = crate::Error;

    fn try_from(raw: RawGroundTruth) -> Result<Self> {
        Self::new(raw.help_pref, raw.safe_prob)
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl GroundTruth {
    /// Validates complementarity (within 1e-12), the one-half diagonal and
    /// that every entry is a probability.
    #[allow(clippy::needless_range_loop)]
    pub fn new(help_pref: Vec<Vec<f64>>, safe_prob: Vec<f64>) -> Result<Self> {
        let n = safe_prob.len();
        if n < 2 {
            return Err(invalid("ground truth needs at least 2 actions"));
        }
        if help_pref.len() != n || help_pref.iter().any(|row| row.len() != n) {
            return Err(invalid(format!("help_pref must be {n}x{n}")));
        }
        if !safe_prob.iter().all(|&s| in_unit(s)) {
            return Err(invalid("safe_prob entries must lie in [0, 1]"));
        }
        for i in 0..n {
            if help_pref[i][i] != 0.5 {
                return Err(invalid(format!("help_pref[{i}][{i}] must be 1/2")));
            }
            for j in 0..n {
                let p = help_pref[i][j];
                if !in_unit(p) {
                    return Err(invalid(format!("help_pref[{i}][{j}] = {p} outside [0, 1]")));
                }
                if (p + help_pref[j][i] - 1.0).abs() > COMPLEMENT_TOL {
                    return Err(invalid(format!("help_pref[{i}][{j}] + help_pref[{j}][{i}] != 1")));
                }
            }
        }
        Ok(Self { help_pref, safe_prob })
    }

    pub fn n(&self) -> usize {
        self.safe_prob.len()
    }

    pub fn help_pref(&self) -> &[Vec<f64>] {
        &self.help_pref
    }

    pub fn help(&self, i: usize, j: usize) -> f64 {
        self.help_pref[i][j]
    }

    pub fn safe_prob(&self) -> &[f64] {
        &self.safe_prob
    }

    pub fn safe(&self, i: usize) -> f64 {
        self.safe_prob[i]
    }

    /// True when every off-diagonal preference is 0, 1/2 or 1 and every
    /// safety probability is 0 or 1.
    pub fn is_deterministic(&self) -> bool {
        let n = self.n();
        let prefs_ok = (0..n).all(|i| {
            (0..n).all(|j| i == j || matches!(self.help_pref[i][j], x if x == 0.0 || x == 0.5 || x == 1.0))
        });
        prefs_ok && self.safe_prob.iter().all(|&s| s == 0.0 || s == 1.0)
    }

    /// Relabels actions: action `k` of the result is action `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let help_pref = perm.iter().map(|&a| perm.iter().map(|&b| self.help_pref[a][b]).collect()).collect();
        let safe_prob = perm.iter().map(|&a| self.safe_prob[a]).collect();
        Ok(Self { help_pref, safe_prob })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(invalid(format!("expected a permutation of {n} actions, got {} entries", order.len())));
    }
    for &a in order {
        if a >= n || seen[a] {
            return Err(invalid(format!("{order:?} is not a permutation of 0..{n}")));
        }
        seen[a] = true;
    }
    Ok(())
}

fn binary_flags(flags: &[u8]) -> Result<Vec<f64>> {
    flags
        .iter()
        .map(|&f| match f {
            0 => Ok(0.0),
            1 => Ok(1.0),
            other => Err(invalid(format!("safety flag {other} is not binary"))),
        })
        .collect()
}

/// Deterministic preferences from a total order (`order[0]` most helpful).
pub fn ground_truth_from_order(order: &[usize], safe_flags: &[u8]) -> Result<GroundTruth> {
    let n = order.len();
    if n < 2 {
        return Err(invalid("need at least 2 actions"));
    }
    check_permutation(order, n)?;
    if safe_flags.len() != n {
        return Err(invalid(format!("expected {n} safety flags, got {}", safe_flags.len())));
    }
    let mut rank = vec![0usize; n];
    for (pos, &a) in order.iter().enumerate() {
        rank[a] = pos;
    }
    let help_pref = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match rank[i].cmp(&rank[j]) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Greater => 0.0,
                    std::cmp::Ordering::Equal => 0.5,
                })
                .collect()
        })
        .collect();
    GroundTruth::new(help_pref, binary_flags(safe_flags)?)
}

/// Complementary pair `(sigmoid(d), sigmoid(-d))` summing to exactly 1.
fn sigmoid_pair(d: f64) -> (f64, f64) {
    let hi = 1.0 / (1.0 + (-d.abs()).exp());
    // hi is in [1/2, 1], so 1 - hi is exact and hi + (1 - hi) == 1.
    let lo = 1.0 - hi;
    if d >= 0.0 {
        (hi, lo)
    } else {
        (lo, hi)
    }
}

fn bt_matrix(scores: &[f64]) -> Vec<Vec<f64>> {
    let n = scores.len();
    let mut m = vec![vec![0.5; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = sigmoid_pair(scores[i] - scores[j]);
            m[i][j] = a;
            m[j][i] = b;
        }
    }
    m
}

/// Bradley-Terry preferences `p(i > j) = sigmoid(s_i - s_j)`.
pub fn ground_truth_from_bt_scores(scores: &[f64], safe_prob: &[f64]) -> Result<GroundTruth> {
    if scores.iter().chain(safe_prob).any(|x| !x.is_finite()) {
        return Err(invalid("non-finite score or safety probability"));
    }
    if scores.len() != safe_prob.len() {
        return Err(invalid("scores and safe_prob lengths differ"));
    }
    GroundTruth::new(bt_matrix(scores), safe_prob.to_vec())
}

/// Product ground truth over `a * b` actions where helpfulness depends only on
/// the first factor and safety only on the second. Action `(i, k)` has index
/// `i * b + k`.
pub fn product_ground_truth(help_scores: &[f64], safe_prob_b: &[f64]) -> Result<GroundTruth> {
    let (a, b) = (help_scores.len(), safe_prob_b.len());
    if a < 2 || b < 1 {
        return Err(invalid(format!("product ground truth needs a >= 2 and b >= 1, got a = {a}, b = {b}")));
    }
    if help_scores.iter().chain(safe_prob_b).any(|x| !x.is_finite()) {
        return Err(invalid("non-finite score or safety probability"));
    }
    let base = bt_matrix(help_scores);
    let n = a * b;
    let mut help_pref = vec![vec![0.5; n]; n];
    for (x, row) in help_pref.iter_mut().enumerate() {
        for (y, p) in row.iter_mut().enumerate() {
            *p = base[x / b][y / b];
        }
    }
    let safe_prob = (0..n).map(|x| safe_prob_b[x % b]).collect();
    GroundTruth::new(help_pref, safe_prob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exact_complements(gt: &GroundTruth) -> bool {
        let n = gt.n();
        (0..n).all(|i| gt.help(i, i) == 0.5 && (0..n).all(|j| gt.help(i, j) + gt.help(j, i) == 1.0))
    }

    #[test]
    fn order_constructor_matches_illustrative_setup() {
        let gt = ground_truth_from_order(&[0, 1, 2, 3], &[1, 0, 1, 0]).unwrap();
        assert_eq!(gt.help(0, 1), 1.0);
        assert_eq!(gt.help(2, 1), 0.0);
        assert_eq!(gt.safe_prob(), &[1.0, 0.0, 1.0, 0.0]);
        assert!(gt.is_deterministic());
    }

    #[test]
    fn order_diagonal_and_reversal() {
        let gt = ground_truth_from_order(&[0, 1], &[0, 1]).unwrap();
        assert_eq!(gt.help(0, 0), 0.5);
        let rev = ground_truth_from_order(&[1, 0], &[1, 1]).unwrap();
        assert_eq!(rev.help(0, 1), 0.0);
    }

    #[test]
    fn order_rejects_bad_input() {
        assert!(ground_truth_from_order(&[0, 0, 1], &[1, 1, 1]).is_err());
        assert!(ground_truth_from_order(&[0, 3, 1], &[1, 1, 1]).is_err());
        assert!(ground_truth_from_order(&[0, 1], &[2, 1]).is_err());
        assert!(ground_truth_from_order(&[0, 1], &[1]).is_err());
    }

    #[test]
    fn bt_examples() {
        let gt = ground_truth_from_bt_scores(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(gt.help(0, 1), 0.5);
        let gt = ground_truth_from_bt_scores(&[3f64.ln(), 0.0], &[1.0, 0.0]).unwrap();
        assert!((gt.help(0, 1) - 0.75).abs() < 1e-15);
        let gt = ground_truth_from_bt_scores(&[1.0, 2.0, 3.0], &[0.5; 3]).unwrap();
        assert!(exact_complements(&gt));
        assert!(ground_truth_from_bt_scores(&[f64::NAN, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn product_degenerate_factor_is_bt() {
        let p = product_ground_truth(&[0.3, -1.2], &[0.7]).unwrap();
        let bt = ground_truth_from_bt_scores(&[0.3, -1.2], &[0.7, 0.7]).unwrap();
        assert_eq!(p, bt);
    }

    #[test]
    fn product_structure() {
        let p = product_ground_truth(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(p.help(i, j), 0.5);
                }
            }
        }
        let p = product_ground_truth(&[1.0, -1.0], &[0.9, 0.2]).unwrap();
        // (0,1) -> index 1, (1,1) -> index 3
        assert_eq!(p.safe(1), p.safe(3));
        // same helpfulness factor compares at 1/2
        assert_eq!(p.help(0, 1), 0.5);
        assert!(product_ground_truth(&[1.0], &[1.0]).is_err());
        assert!(product_ground_truth(&[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let gt = ground_truth_from_order(&[2, 0, 1], &[1, 0, 1]).unwrap();
        let back: GroundTruth = serde_json::from_str(&gt.to_json()).unwrap();
        assert_eq!(gt, back);
        let bad = r#"{"help_pref": [[0.5, 0.9], [0.2, 0.5]], "safe_prob": [1, 0]}"#;
        assert!(serde_json::from_str::<GroundTruth>(bad).is_err());
        let extra = r#"{"help_pref": [[0.5, 0.5], [0.5, 0.5]], "safe_prob": [1, 0], "x": 1}"#;
        assert!(serde_json::from_str::<GroundTruth>(extra).is_err());
    }

    proptest! {
        #[test]
        fn constructors_are_exactly_complementary(
            scores in prop::collection::vec(-8.0f64..8.0, 2..7),
            safe in prop::collection::vec(0.0f64..=1.0, 1..3),
        ) {
            let n = scores.len();
            let s: Vec<f64> = (0..n).map(|i| safe[i % safe.len()]).collect();
            prop_assert!(exact_complements(&ground_truth_from_bt_scores(&scores, &s).unwrap()));
            prop_assert!(exact_complements(&product_ground_truth(&scores, &safe).unwrap()));
            let mut order: Vec<usize> = (0..n).collect();
            order.reverse();
            let flags: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            prop_assert!(exact_complements(&ground_truth_from_order(&order, &flags).unwrap()));
        }
    }
}
