//! Exact-enumeration audit of the supervised objective against the
//! reward-based objective.
//!
//! Both objectives are expectations under one fixed pair-sampling
//! distribution `w(i, j)`:
//!
//! ```text
//!   direct(theta)   = sum_ij w_ij E_I[(h_ij - g_I(i, j) / tau)^2]
//!   expected(theta) = sum_ij w_ij (h_ij - (g_i - g_j) / tau)^2
//! ```
//!
//! They share the quadratic part in `h`, so they are equivalent exactly when
//! their cross terms agree: the gradients coincide and the objective gap is
//! the same constant for every `theta`. `g` is evaluated under a fixed
//! distribution `mu`, the sampling marginal unless overridden.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::labeling::LabelConfig;
use crate::losses::{exact_expected_loss_and_grad, gap, LossKind, PairSampling};
use crate::par;
use crate::policy::TabularPolicy;
use crate::reward::{expected_safety, global_rewards, A1Mode, RewardConfig};
use crate::truth::GroundTruth;

/// Tolerance the auditor uses for a PASS verdict.
pub const PASS_TOL: f64 = 1e-9;

const RELATION_TOL: f64 = 1e-12;
const DECOUPLED_TOL: f64 = 1e-12;

/// Everything one audit needs besides the `theta` draws.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditInputs {
    pub pi_ref: TabularPolicy,
    pub gt: GroundTruth,
    pub label: LabelConfig,
    pub reward: RewardConfig,
    pub tau: f64,
    pub sampling: PairSampling,
    /// Distribution `g` is evaluated under; `None` means the sampling marginal.
    pub eval_policy: Option<Vec<f64>>,
}

impl AuditInputs {
    /// Uniform reference, uniform pair sampling, reward matched to `label`.
    pub fn canonical(gt: GroundTruth, label: LabelConfig) -> Result<Self> {
        let n = gt.n();
        Ok(Self {
            pi_ref: TabularPolicy::uniform(n)?,
            reward: RewardConfig::matching(&label),
            tau: label.tau,
            label,
            sampling: PairSampling::uniform(n)?,
            gt,
            eval_policy: None,
        })
    }

    pub fn eval_distribution(&self) -> Vec<f64> {
        self.eval_policy.clone().unwrap_or_else(|| self.sampling.marginal())
    }

    fn validate(&self) -> Result<()> {
        let n = self.gt.n();
        if self.pi_ref.len() != n || self.sampling.n() != n {
            return Err(invalid("reference policy, ground truth and sampling disagree on the action count"));
        }
        if let Some(mu) = &self.eval_policy {
            if mu.len() != n || mu.iter().any(|&p| !(p >= 0.0)) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(invalid("evaluation policy must be a distribution over the actions"));
            }
        }
        if !(self.tau > 0.0) {
            return Err(invalid("tau must be positive"));
        }
        Ok(())
    }
}

/// Supervised objective: exact BFPO expectation under the general labeling.
pub fn direct_objective(theta: &[f64], pi_ref: &TabularPolicy, gt: &GroundTruth, label: &LabelConfig, sampling: &PairSampling) -> Result<f64> {
    Ok(direct_objective_and_grad(theta, pi_ref, gt, label, sampling)?.0)
}

pub fn direct_objective_and_grad(
    theta: &[f64],
    pi_ref: &TabularPolicy,
    gt: &GroundTruth,
    label: &LabelConfig,
    sampling: &PairSampling,
) -> Result<(f64, Vec<f64>)> {
    exact_expected_loss_and_grad(&LossKind::Bfpo(*label), theta, pi_ref.logits(), gt, sampling)
}

/// Reward-based objective with `g` evaluated under `eval` (default: the
/// sampling marginal).
pub fn expected_objective(
    theta: &[f64],
    pi_ref: &TabularPolicy,
    gt: &GroundTruth,
    reward: &RewardConfig,
    tau: f64,
    sampling: &PairSampling,
    eval: Option<&[f64]>,
) -> Result<f64> {
    Ok(expected_objective_and_grad(theta, pi_ref, gt, reward, tau, sampling, eval)?.0)
}

pub fn expected_objective_and_grad(
    theta: &[f64],
    pi_ref: &TabularPolicy,
    gt: &GroundTruth,
    reward: &RewardConfig,
    tau: f64,
    sampling: &PairSampling,
    eval: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let marginal;
    let mu = match eval {
        Some(mu) => mu,
        None => {
            marginal = sampling.marginal();
            &marginal
        }
    };
    let g = global_rewards(mu, gt, reward)?;
    expected_with_rewards(theta, pi_ref.logits(), &g, tau, sampling)
}

fn expected_with_rewards(theta: &[f64], reference: &[f64], g: &[f64], tau: f64, sampling: &PairSampling) -> Result<(f64, Vec<f64>)> {
    let n = g.len();
    if theta.len() != n || reference.len() != n || sampling.n() != n {
        return Err(invalid("dimension mismatch between logits, rewards and sampling"));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (i, j, w) in sampling.support() {
        let r = gap(theta, reference, i, j) - (g[i] - g[j]) / tau;
        loss += w * r * r;
        grad[i] += 2.0 * w * r;
        grad[j] -= 2.0 * w * r;
    }
    Ok((loss, grad))
}

/// Residuals of the three coefficient-matching relations, in order
/// `B3 (B1 - 1) = 1`, `A1 = E_s + 2 B2 B3`, `A2 = B3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantRelations {
    pub residuals: [f64; 3],
    pub holds: bool,
}

pub fn check_constant_relations(label: &LabelConfig, reward: &RewardConfig, e_s: f64) -> ConstantRelations {
    let (b1, b2, b3) = (label.b1, label.b2, label.b3);
    let residuals = [b3 * (b1 - 1.0) - 1.0, reward.resolve_a1(e_s) - (e_s + 2.0 * b2 * b3), reward.a2 - b3];
    ConstantRelations { residuals, holds: residuals.iter().all(|r| r.abs() <= RELATION_TOL) }
}

/// How far `gt` is from being helpfulness/safety decoupled under `mu`: the
/// largest of `|E_{y'}[p_help(y > y') p_safe(y')] - p_help(y > mu) E_s|` over
/// `y`, and `|E_y[p_safe(y) p_help(y > mu)] - E_s / 2|`.
pub fn coupling_residual(gt: &GroundTruth, mu: &[f64]) -> Result<f64> {
    let e_s = expected_safety(mu, gt)?;
    let n = gt.n();
    let mut worst = 0.0f64;
    let mut cross = 0.0;
    for i in 0..n {
        let ph: f64 = (0..n).map(|j| mu[j] * gt.help(i, j)).sum();
        let joint: f64 = (0..n).map(|j| mu[j] * gt.help(i, j) * gt.safe(j)).sum();
        worst = worst.max((joint - ph * e_s).abs());
        cross += mu[i] * gt.safe(i) * ph;
    }
    Ok(worst.max((cross - 0.5 * e_s).abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl GapStats {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            stddev: var.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditedConstants {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// How the labeling is moved alongside a shifted reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftPairing {
    /// Labeling constants re-derived from the relations for the shifted
    /// reward constants `(A1 + p1, A2 + p2)`.
    Matched,
    /// `p1` added to `I_safe(hw)` and `p2` to `I_safe(hl)` inside `g_I`
    /// (every label moves by `B3 (B1 p1 - p2)`).
    LabelOffset,
    /// Only the reward is shifted.
    RewardOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftInfo {
    pub p1: f64,
    pub p2: f64,
    pub pairing: ShiftPairing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub verdict: Verdict,
    pub tolerance: f64,
    pub n_theta: usize,
    pub seed: u64,
    /// `expected(theta) - direct(theta)` over the draws.
    pub objective_gap_stats: GapStats,
    /// Largest absolute component difference of the two gradients.
    pub gradient_gap: f64,
    pub decoupled: bool,
    pub coupling_residual: f64,
    pub e_s: f64,
    pub constants: AuditedConstants,
    pub relations: ConstantRelations,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shift: Option<ShiftInfo>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Draws `n_theta` logit vectors uniformly from `[-2, 2]^n`, compares both
/// objectives and gradients at each, and reports.
pub fn audit_equivalence(inputs: &AuditInputs, n_theta: usize, seed: u64, tol: f64) -> Result<AuditReport> {
    inputs.validate()?;
    if n_theta < 2 {
        return Err(invalid("an audit needs at least 2 theta samples"));
    }
    let n = inputs.gt.n();
    let label = inputs.label.with_tau(inputs.tau)?;
    let mu = inputs.eval_distribution();
    let g = global_rewards(&mu, &inputs.gt, &inputs.reward)?;
    let e_s = expected_safety(&mu, &inputs.gt)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<Vec<f64>> = (0..n_theta).map(|_| (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect()).collect();

    let reference = inputs.pi_ref.logits();
    let kind = LossKind::Bfpo(label);
    let evals = par::map_slice(&thetas, |theta| -> Result<(f64, f64)> {
        let (ld, gd) = exact_expected_loss_and_grad(&kind, theta, reference, &inputs.gt, &inputs.sampling)?;
        let (le, ge) = expected_with_rewards(theta, reference, &g, inputs.tau, &inputs.sampling)?;
        let ggap = gd.iter().zip(&ge).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((le - ld, ggap))
    });
    let evals = evals.into_iter().collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let gradient_gap = evals.iter().map(|e| e.1).fold(0.0, f64::max);
    let objective_gap_stats = GapStats::from_samples(&gaps);

    let coupling = coupling_residual(&inputs.gt, &mu)?;
    let verdict = if objective_gap_stats.stddev < tol && gradient_gap < tol { Verdict::Pass } else { Verdict::Fail };
    Ok(AuditReport {
        verdict,
        tolerance: tol,
        n_theta,
        seed,
        objective_gap_stats,
        gradient_gap,
        decoupled: coupling < DECOUPLED_TOL,
        coupling_residual: coupling,
        e_s,
        constants: AuditedConstants { a1: inputs.reward.resolve_a1(e_s), a2: inputs.reward.a2, b1: label.b1, b2: label.b2, b3: label.b3 },
        relations: check_constant_relations(&label, &inputs.reward, e_s),
        shift: None,
    })
}

/// Labeling constants that satisfy the relations for a reward with resolved
/// constants `(a1, a2)` at safety level `e_s`.
pub fn label_for_reward(a1: f64, a2: f64, e_s: f64, tau: f64) -> Result<LabelConfig> {
    if a2 == 0.0 {
        return Err(invalid("A2 = 0 admits no matching labeling"));
    }
    LabelConfig::from_relations(a2, (a1 - e_s) / (2.0 * a2), tau)
}

/// Re-runs the audit with the reward shifted by `(p1, p2)` and the labeling
/// moved according to `pairing`.
pub fn audit_shift_property(inputs: &AuditInputs, p1: f64, p2: f64, pairing: ShiftPairing, n_theta: usize, seed: u64, tol: f64) -> Result<AuditReport> {
    inputs.validate()?;
    let mu = inputs.eval_distribution();
    let e_s = expected_safety(&mu, &inputs.gt)?;
    let shifted_reward = inputs.reward.with_shift(inputs.reward.shift_p1 + p1, inputs.reward.shift_p2 + p2);
    let label = match pairing {
        ShiftPairing::Matched => {
            let a1 = inputs.reward.resolve_a1(e_s) + shifted_reward.shift_p1;
            let a2 = inputs.reward.a2 + shifted_reward.shift_p2;
            label_for_reward(a1, a2, e_s, inputs.tau)?
        }
        ShiftPairing::LabelOffset => {
            let l = inputs.label;
            LabelConfig::general(l.b1, l.b2 + l.b1 * p1 - p2, l.b3, inputs.tau)?
        }
        ShiftPairing::RewardOnly => inputs.label,
    };
    // fold the shifts into explicit constants so the report shows what was audited
    let reward = match pairing {
        ShiftPairing::Matched => RewardConfig {
            a1_mode: A1Mode::Explicit(inputs.reward.resolve_a1(e_s) + shifted_reward.shift_p1),
            a2: inputs.reward.a2 + shifted_reward.shift_p2,
            shift_p1: 0.0,
            shift_p2: 0.0,
        },
        _ => shifted_reward,
    };
    let shifted = AuditInputs { label, reward, ..inputs.clone() };
    let mut report = audit_equivalence(&shifted, n_theta, seed, tol)?;
    report.shift = Some(ShiftInfo { p1, p2, pairing });
    Ok(report)
}
