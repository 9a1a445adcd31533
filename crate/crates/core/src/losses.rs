//! Supervised preference losses on tabular policies and their exact
//! gradients with respect to the logits.
//!
//! Every loss is a function of the log-ratio gap
//!
//! ```text
//!   h(hw, hl) = (theta_hw - theta_hl) - (ref_hw - ref_hl)
//! ```
//!
//! (the softmax normalizers cancel). BFPO and IPO are squared losses toward a
//! target gap, DPO is logistic.

use serde::{Deserialize, Serialize};

use crate::dataset::{OrientedPair, PreferenceRecord};
use crate::error::{invalid, Result};
use crate::labeling::LabelConfig;
use crate::par;
use crate::policy::TabularPolicy;
use crate::truth::GroundTruth;

/// Record count above which batch evaluation fans out over threads.
const PAR_BATCH_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bfpo(LabelConfig),
    Dpo { tau: f64 },
    Ipo { tau: f64 },
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Bfpo(_) => "bfpo",
            LossKind::Dpo { .. } => "dpo",
            LossKind::Ipo { .. } => "ipo",
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            LossKind::Bfpo(cfg) => cfg.tau,
            LossKind::Dpo { tau } | LossKind::Ipo { tau } => *tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::Bfpo(cfg) => cfg.validate(),
            LossKind::Dpo { tau } | LossKind::Ipo { tau } if !(*tau > 0.0) || !tau.is_finite() => {
                Err(invalid(format!("tau must be positive, got {tau}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_squared(&self) -> bool {
        !matches!(self, LossKind::Dpo { .. })
    }

    /// Target of the squared losses for one oriented pair; `None` for DPO.
    pub fn target(&self, pair: &OrientedPair) -> Option<f64> {
        match self {
            LossKind::Bfpo(cfg) => Some(cfg.label_hw_hl(pair.safe_hw, pair.safe_hl) / cfg.tau),
            LossKind::Ipo { tau } => Some(1.0 / (2.0 * tau)),
            LossKind::Dpo { .. } => None,
        }
    }

    /// Loss and its derivative in `h` for one oriented pair.
    fn term(&self, h: f64, pair: &OrientedPair) -> (f64, f64) {
        match self {
            LossKind::Dpo { tau } => {
                let z = tau * h;
                (softplus(-z), -tau * sigmoid(-z))
            }
            _ => {
                let r = h - self.target(pair).expect("squared loss has a target");
                (r * r, 2.0 * r)
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow; `-ln sigmoid(z) = softplus(-z)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn gap(theta: &[f64], reference: &[f64], i: usize, j: usize) -> f64 {
    (theta[i] - theta[j]) - (reference[i] - reference[j])
}

/// `h_pi(y_i, y_j) = log(pi(y_i) pi_ref(y_j) / (pi(y_j) pi_ref(y_i)))`.
pub fn h_pi(policy: &TabularPolicy, pi_ref: &TabularPolicy, i: usize, j: usize) -> Result<f64> {
    let n = policy.len();
    if pi_ref.len() != n {
        return Err(invalid("policy and reference sizes differ"));
    }
    if i >= n || j >= n {
        return Err(invalid(format!("pair ({i}, {j}) out of range for {n} actions")));
    }
    if i == j {
        return Err(invalid("h_pi needs two distinct actions"));
    }
    Ok(gap(policy.logits(), pi_ref.logits(), i, j))
}

fn check_pair(n: usize, theta: &[f64], reference: &[f64], r: &PreferenceRecord) -> Result<()> {
    if theta.len() != n || reference.len() != n {
        return Err(invalid("logit vectors have mismatched lengths"));
    }
    r.validate()?;
    if r.first >= n || r.second >= n {
        return Err(invalid(format!("record ({}, {}) out of range for {n} actions", r.first, r.second)));
    }
    Ok(())
}

pub fn pair_loss(kind: &LossKind, policy: &TabularPolicy, pi_ref: &TabularPolicy, record: &PreferenceRecord) -> Result<f64> {
    check_pair(policy.len(), policy.logits(), pi_ref.logits(), record)?;
    let o = record.oriented();
    Ok(kind.term(gap(policy.logits(), pi_ref.logits(), o.hw, o.hl), &o).0)
}

/// Mean loss over `records` and its gradient in the logits.
pub fn batch_loss_and_grad(
    kind: &LossKind,
    policy: &TabularPolicy,
    pi_ref: &TabularPolicy,
    records: &[PreferenceRecord],
) -> Result<(f64, Vec<f64>)> {
    loss_and_grad_logits(kind, policy.logits(), pi_ref.logits(), records)
}

/// [`batch_loss_and_grad`] on raw logit slices.
pub fn loss_and_grad_logits(
    kind: &LossKind,
    theta: &[f64],
    reference: &[f64],
    records: &[PreferenceRecord],
) -> Result<(f64, Vec<f64>)> {
    if records.is_empty() {
        return Err(invalid("empty batch"));
    }
    let n = theta.len();
    for r in records {
        check_pair(n, theta, reference, r)?;
    }
    let eval = |r: &PreferenceRecord| {
        let o = r.oriented();
        let (l, d) = kind.term(gap(theta, reference, o.hw, o.hl), &o);
        (l, d, o.hw, o.hl)
    };
    let terms: Vec<(f64, f64, usize, usize)> = if records.len() >= PAR_BATCH_THRESHOLD {
        par::map_slice(records, eval)
    } else {
        records.iter().map(eval).collect()
    };
    // fixed-order reduction
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (l, d, hw, hl) in terms {
        loss += l;
        grad[hw] += d;
        grad[hl] -= d;
    }
    let m = records.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok((loss / m, grad))
}

/// A distribution over ordered pairs `(i, j)`, `i != j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PairSampling {
    weights: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for PairSampling {
    type Error = crate::Error;

    fn try_from(w: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<PairSampling> for Vec<Vec<f64>> {
    fn from(s: PairSampling) -> Self {
        s.weights
    }
}

impl PairSampling {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        if n < 2 || weights.iter().any(|r| r.len() != n) {
            return Err(invalid("pair sampling must be a square matrix over at least 2 actions"));
        }
        let mut total = 0.0;
        for (i, row) in weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(invalid(format!("weight ({i}, {j}) = {w} is not a probability")));
                }
                if i == j && w != 0.0 {
                    return Err(invalid("self-pairs must have zero weight"));
                }
                total += w;
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("pair weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("need at least 2 actions"));
        }
        let w = 1.0 / (n * (n - 1)) as f64;
        Self::new((0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { w }).collect()).collect())
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    /// Average of the first- and second-position marginals.
    pub fn marginal(&self) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|k| {
                let row: f64 = self.weights[k].iter().sum();
                let col: f64 = self.weights.iter().map(|r| r[k]).sum();
                0.5 * (row + col)
            })
            .collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(perm.iter().map(|&a| perm.iter().map(|&b| self.weights[a][b]).collect()).collect())
    }

    /// Pairs with positive weight, row-major.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &w)| (i, j, w)))
            .filter(|&(_, _, w)| w > 0.0)
    }
}

/// The eight label outcomes `(I_help(first > second), I_safe(first), I_safe(second))`
/// of one ordered pair with their ground-truth probabilities.
pub(crate) fn label_outcomes(gt: &GroundTruth, i: usize, j: usize) -> [(PreferenceRecord, f64); 8] {
    let (ph, si, sj) = (gt.help(i, j), gt.safe(i), gt.safe(j));
    let pr = |b: bool, p: f64| if b { p } else { 1.0 - p };
    std::array::from_fn(|k| {
        let (h, a, b) = (k & 4 != 0, k & 2 != 0, k & 1 != 0);
        let rec = PreferenceRecord {
            first: i,
            second: j,
            i_help_first: h,
            i_safe_first: a,
            i_safe_second: b,
            source: crate::dataset::Source::Safety,
        };
        (rec, pr(h, ph) * pr(a, si) * pr(b, sj))
    })
}

/// Exact expectation of the per-pair loss over `sampling` and all eight
/// Bernoulli label outcomes, with its logit gradient.
pub fn exact_expected_loss_and_grad(
    kind: &LossKind,
    theta: &[f64],
    reference: &[f64],
    gt: &GroundTruth,
    sampling: &PairSampling,
) -> Result<(f64, Vec<f64>)> {
    let n = gt.n();
    if theta.len() != n || reference.len() != n || sampling.n() != n {
        return Err(invalid("dimension mismatch between logits, ground truth and sampling"));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (i, j, w) in sampling.support() {
        for (rec, p) in label_outcomes(gt, i, j) {
            if p == 0.0 {
                continue;
            }
            let o = rec.oriented();
            let (l, d) = kind.term(gap(theta, reference, o.hw, o.hl), &o);
            loss += w * p * l;
            grad[o.hw] += w * p * d;
            grad[o.hl] -= w * p * d;
        }
    }
    Ok((loss, grad))
}

pub fn exact_expected_loss(
    kind: &LossKind,
    policy: &TabularPolicy,
    pi_ref: &TabularPolicy,
    gt: &GroundTruth,
    sampling: &PairSampling,
) -> Result<f64> {
    Ok(exact_expected_loss_and_grad(kind, policy.logits(), pi_ref.logits(), gt, sampling)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{all_pairs_dataset, LabelMode, Source};
    use crate::truth::{ground_truth_from_bt_scores, ground_truth_from_order};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn canon(alpha: f64, tau: f64) -> LossKind {
        LossKind::Bfpo(LabelConfig::canonical(alpha, tau).unwrap())
    }

    fn rec(first: usize, second: usize, h: bool, a: bool, b: bool) -> PreferenceRecord {
        PreferenceRecord::new(first, second, h, a, b, Source::Safety).unwrap()
    }

    fn pol(v: &[f64]) -> TabularPolicy {
        TabularPolicy::new(v.to_vec()).unwrap()
    }

    #[test]
    fn h_pi_examples() {
        let p = pol(&[0.3, -1.0, 2.0]);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(h_pi(&p, &p, i, j).unwrap(), 0.0);
                }
            }
        }
        let ref4 = TabularPolicy::uniform(4).unwrap();
        assert_eq!(h_pi(&pol(&[1.0, 0.0, 0.0, 0.0]), &ref4, 0, 1).unwrap(), 1.0);
        assert!(h_pi(&p, &p, 1, 1).is_err());
        assert!(h_pi(&p, &p, 0, 7).is_err());
    }

    #[test]
    fn pair_loss_at_reference() {
        let r = TabularPolicy::uniform(4).unwrap();
        let safe_over_unsafe = rec(0, 1, true, true, false);
        assert_eq!(pair_loss(&canon(0.5, 1.0), &r, &r, &safe_over_unsafe).unwrap(), 1.0);
        let dpo = pair_loss(&LossKind::Dpo { tau: 1.0 }, &r, &r, &safe_over_unsafe).unwrap();
        assert!((dpo - std::f64::consts::LN_2).abs() < 1e-15);
        let p = pol(&[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(pair_loss(&LossKind::Ipo { tau: 1.0 }, &p, &r, &safe_over_unsafe).unwrap(), 0.0);
    }

    #[test]
    fn gradients_at_reference() {
        let r = TabularPolicy::uniform(4).unwrap();
        let batch = [rec(0, 1, true, true, false)];
        let (_, g) = batch_loss_and_grad(&canon(0.5, 1.0), &r, &r, &batch).unwrap();
        assert_eq!(g, vec![-2.0, 2.0, 0.0, 0.0]);
        let (_, g) = batch_loss_and_grad(&LossKind::Dpo { tau: 1.0 }, &r, &r, &batch).unwrap();
        assert_eq!(g, vec![-0.5, 0.5, 0.0, 0.0]);
        assert!(batch_loss_and_grad(&canon(0.5, 1.0), &r, &r, &[]).is_err());
    }

    #[test]
    fn dpo_is_stable_for_large_gaps() {
        let kind = LossKind::Dpo { tau: 1.0 };
        let r = TabularPolicy::uniform(2).unwrap();
        let far = pol(&[800.0, -800.0]);
        let (l, g) = batch_loss_and_grad(&kind, &far, &r, &[rec(1, 0, false, true, true)]).unwrap();
        assert!(l.is_finite() && (0.0..1e-300).contains(&l));
        assert!(g.iter().all(|x| x.is_finite()));
        let (l, _) = batch_loss_and_grad(&kind, &far, &r, &[rec(0, 1, false, true, true)]).unwrap();
        assert!((l - 1600.0).abs() < 1e-9);
    }

    fn fd_grad(kind: &LossKind, theta: &[f64], reference: &[f64], batch: &[PreferenceRecord], step: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|k| {
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[k] += step;
                dn[k] -= step;
                let lu = loss_and_grad_logits(kind, &up, reference, batch).unwrap().0;
                let ld = loss_and_grad_logits(kind, &dn, reference, batch).unwrap().0;
                (lu - ld) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [canon(0.5, 1.0), LossKind::Dpo { tau: 0.7 }, LossKind::Ipo { tau: 1.3 }] {
            for _ in 0..10 {
                let n = rng.random_range(2..7);
                let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let reference: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let batch: Vec<PreferenceRecord> = (0..rng.random_range(1..20))
                    .map(|_| {
                        let a = rng.random_range(0..n);
                        let b = (a + rng.random_range(1..n)) % n;
                        rec(a, b, rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5))
                    })
                    .collect();
                let (_, g) = loss_and_grad_logits(&kind, &theta, &reference, &batch).unwrap();
                let f = fd_grad(&kind, &theta, &reference, &batch, 1e-5);
                let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let err = g.iter().zip(&f).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(err <= 1e-6 * scale, "{} rel err {}", kind.name(), err / scale);
            }
        }
    }

    #[test]
    fn bfpo_vertex_is_label_over_tau() {
        let kind = canon(0.5, 2.0);
        let r = TabularPolicy::uniform(2).unwrap();
        let record = rec(0, 1, true, true, false);
        let target = 1.0 / 2.0;
        let loss_at = |h: f64| pair_loss(&kind, &pol(&[h, 0.0]), &r, &record).unwrap();
        // grid line search over h
        let best = (0..=4000).map(|k| -2.0 + k as f64 * 1e-3).min_by(|a, b| loss_at(*a).total_cmp(&loss_at(*b))).unwrap();
        assert!((best - target).abs() < 1e-9);
        assert_eq!(loss_at(target), 0.0);
    }

    #[test]
    fn deterministic_truth_expectation_is_dataset_mean() {
        let gt = ground_truth_from_order(&[0, 1, 2, 3], &[1, 0, 1, 0]).unwrap();
        let ds = all_pairs_dataset(&gt, LabelMode::Deterministic).unwrap();
        let theta = pol(&[0.4, -0.3, 0.1, 0.9]);
        let r = TabularPolicy::uniform(4).unwrap();
        let s = PairSampling::uniform(4).unwrap();
        for kind in [canon(0.5, 1.0), LossKind::Dpo { tau: 1.0 }, LossKind::Ipo { tau: 1.0 }] {
            let exact = exact_expected_loss(&kind, &theta, &r, &gt, &s).unwrap();
            let (mean, _) = batch_loss_and_grad(&kind, &theta, &r, ds.records()).unwrap();
            assert!((exact - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn all_half_truth_two_actions_by_hand() {
        // n = 2, every label a fair coin, theta = ref: h = 0 on whichever side
        // wins helpfulness, so the loss is the mean squared label over the
        // four (safe_hw, safe_hl) cases, each case reached by 2 of 8 outcomes.
        let gt = ground_truth_from_bt_scores(&[0.0, 0.0], &[0.5, 0.5]).unwrap();
        let r = TabularPolicy::uniform(2).unwrap();
        let s = PairSampling::uniform(2).unwrap();
        let exact = exact_expected_loss(&canon(0.5, 1.0), &r, &r, &gt, &s).unwrap();
        let hand = (1.0f64 + 0.25 + 0.25 + 1.0) / 4.0;
        assert_eq!(exact, hand);
        // off the reference: h(0,1) = 0.3; labels are targets for (hw, hl)
        let p = pol(&[0.3, 0.0]);
        let exact = exact_expected_loss(&canon(0.5, 1.0), &p, &r, &gt, &s).unwrap();
        let cases = [1.0, 0.5, -0.5, -1.0];
        let hand: f64 = cases.iter().map(|t| 0.5 * (0.3 - t) * (0.3 - t) + 0.5 * (-0.3 - t) * (-0.3 - t)).sum::<f64>() / 4.0;
        assert!((exact - hand).abs() < 1e-15);
    }

    #[test]
    fn expectation_is_relabeling_invariant() {
        let gt = ground_truth_from_bt_scores(&[0.2, 1.0, -0.4], &[0.9, 0.1, 0.5]).unwrap();
        let theta = [0.1, -0.5, 0.7];
        let reference = [0.0, 0.2, -0.1];
        let s = PairSampling::new(vec![vec![0.0, 0.2, 0.1], vec![0.05, 0.0, 0.25], vec![0.3, 0.1, 0.0]]).unwrap();
        let perm = [2, 0, 1];
        let pt: Vec<f64> = perm.iter().map(|&a| theta[a]).collect();
        let pr: Vec<f64> = perm.iter().map(|&a| reference[a]).collect();
        for kind in [canon(-0.5, 1.0), LossKind::Dpo { tau: 2.0 }, LossKind::Ipo { tau: 0.5 }] {
            let a = exact_expected_loss_and_grad(&kind, &theta, &reference, &gt, &s).unwrap().0;
            let b = exact_expected_loss_and_grad(&kind, &pt, &pr, &gt.permuted(&perm).unwrap(), &s.permuted(&perm).unwrap())
                .unwrap()
                .0;
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sampling_validation() {
        assert!(PairSampling::new(vec![vec![0.5, 0.5], vec![0.0, 0.0]]).is_err());
        assert!(PairSampling::new(vec![vec![0.0, 0.4], vec![0.4, 0.0]]).is_err());
        assert!(PairSampling::new(vec![vec![0.0, 1.5], vec![-0.5, 0.0]]).is_err());
        let s = PairSampling::uniform(3).unwrap();
        assert!(s.marginal().iter().all(|m| (m - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn parallel_batches_reduce_like_sequential() {
        let gt = ground_truth_from_order(&[3, 1, 0, 2, 4], &[1, 0, 1, 1, 0]).unwrap();
        let ds = all_pairs_dataset(&gt, LabelMode::Deterministic).unwrap();
        let big: Vec<PreferenceRecord> = ds.records().iter().cycle().take(PAR_BATCH_THRESHOLD + 13).copied().collect();
        let theta = [0.3, -0.1, 0.8, 0.0, -0.6];
        let reference = [0.0; 5];
        let kind = canon(0.5, 1.0);
        let (l, g) = loss_and_grad_logits(&kind, &theta, &reference, &big).unwrap();
        // sequential replay of the same fixed-order reduction
        let mut loss = 0.0;
        let mut grad = [0.0; 5];
        for r in &big {
            let o = r.oriented();
            let (lt, d) = kind.term(gap(&theta, &reference, o.hw, o.hl), &o);
            loss += lt;
            grad[o.hw] += d;
            grad[o.hl] -= d;
        }
        let m = big.len() as f64;
        assert_eq!(l, loss / m);
        assert_eq!(g, grad.iter().map(|x| x / m).collect::<Vec<_>>());
    }

    #[test]
    fn loss_kind_json() {
        let k: LossKind = serde_json::from_str(r#"{"dpo": {"tau": 0.5}}"#).unwrap();
        assert_eq!(k, LossKind::Dpo { tau: 0.5 });
        let back: LossKind = serde_json::from_str(&serde_json::to_string(&canon(0.5, 1.0)).unwrap()).unwrap();
        assert_eq!(back, canon(0.5, 1.0));
        assert!(LossKind::Ipo { tau: 0.0 }.validate().is_err());
    }

    const BITS: [bool; 2] = [false, true];

    proptest! {
        #[test]
        fn squared_losses_are_swap_invariant(
            theta in prop::collection::vec(-3.0f64..3.0, 3),
            alpha in -1.0f64..1.0,
        ) {
            let kind = canon(alpha, 1.0);
            let p = pol(&theta);
            let r = TabularPolicy::uniform(3).unwrap();
            for h in BITS { for a in BITS { for b in BITS {
                let record = rec(0, 2, h, a, b);
                let x = pair_loss(&kind, &p, &r, &record).unwrap();
                let y = pair_loss(&kind, &p, &r, &record.swapped()).unwrap();
                prop_assert_eq!(x, y);
            }}}
        }

        #[test]
        fn h_telescopes(
            theta in prop::collection::vec(-3.0f64..3.0, 4),
            reference in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let (p, r) = (pol(&theta), pol(&reference));
            let hij = h_pi(&p, &r, 0, 1).unwrap();
            let hjk = h_pi(&p, &r, 1, 3).unwrap();
            let hik = h_pi(&p, &r, 0, 3).unwrap();
            prop_assert!((hij + hjk - hik).abs() < 1e-12);
            prop_assert!((hij + h_pi(&p, &r, 1, 0).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn gradient_is_orthogonal_to_gauge_direction(
            theta in prop::collection::vec(-3.0f64..3.0, 5),
            picks in prop::collection::vec((0usize..5, 1usize..5, any::<bool>(), any::<bool>(), any::<bool>()), 1..30),
        ) {
            let batch: Vec<PreferenceRecord> = picks.iter().map(|&(a, d, h, x, y)| rec(a, (a + d) % 5, h, x, y)).collect();
            for kind in [canon(0.5, 1.0), LossKind::Dpo { tau: 1.0 }, LossKind::Ipo { tau: 1.0 }] {
                let (_, g) = loss_and_grad_logits(&kind, &theta, &[0.0; 5], &batch).unwrap();
                prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }
}
