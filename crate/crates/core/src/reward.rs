//! Ground-truth reward side: expected safety, policy-relative helpfulness,
//! the bilinear global reward and the self-consistent optimal policy.
//!
//! ```text
//!   g(y) = (p*_safe(y) + p1 + A1) * (p*_help(y > mu) + p2 + A2)
//! ```
//!
//! where `mu` is the distribution the reward is evaluated under. `g` depends
//! on `mu` through `E_s` and `p*_help(y > mu)`, so the KL-regularized optimum
//! `pi* ~ pi_ref exp(g_{pi*} / tau)` is a fixed point, found here by damped
//! iteration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::labeling::LabelConfig;
use crate::policy::{softmax_unchecked, TabularPolicy};
use crate::truth::GroundTruth;

/// How the safety offset `A1` is resolved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum A1Mode {
    /// `A1 = E_s` under the evaluation distribution.
    ExpectedSafety,
    /// `A1 = E_s + offset`; the form the constant relations produce when `B2 != 0`.
    ExpectedSafetyPlus(f64),
    Explicit(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub a1_mode: A1Mode,
    #[serde(default = "half")]
    pub a2: f64,
    #[serde(default)]
    pub shift_p1: f64,
    #[serde(default)]
    pub shift_p2: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self::canonical()
    }
}

impl RewardConfig {
    /// `A1 = E_s`, `A2 = 1/2`, no shifts.
    pub fn canonical() -> Self {
        Self { a1_mode: A1Mode::ExpectedSafety, a2: 0.5, shift_p1: 0.0, shift_p2: 0.0 }
    }

    /// The reward whose constants satisfy `A2 = B3` and `A1 = E_s + 2 B2 B3`
    /// for the given labeling constants.
    pub fn matching(label: &LabelConfig) -> Self {
        let offset = 2.0 * label.b2 * label.b3;
        let a1_mode = if offset == 0.0 { A1Mode::ExpectedSafety } else { A1Mode::ExpectedSafetyPlus(offset) };
        Self { a1_mode, a2: label.b3, shift_p1: 0.0, shift_p2: 0.0 }
    }

    pub fn with_shift(mut self, p1: f64, p2: f64) -> Self {
        self.shift_p1 = p1;
        self.shift_p2 = p2;
        self
    }

    pub fn resolve_a1(&self, e_s: f64) -> f64 {
        match self.a1_mode {
            A1Mode::ExpectedSafety => e_s,
            A1Mode::ExpectedSafetyPlus(off) => e_s + off,
            A1Mode::Explicit(a1) => a1,
        }
    }
}

fn check_dims(mu: &[f64], gt: &GroundTruth) -> Result<()> {
    if mu.len() != gt.n() {
        return Err(invalid(format!("distribution has {} entries, ground truth has {} actions", mu.len(), gt.n())));
    }
    Ok(())
}

/// `E_s = sum_i mu_i p*_safe(y_i)`.
pub fn expected_safety(mu: &[f64], gt: &GroundTruth) -> Result<f64> {
    check_dims(mu, gt)?;
    Ok(mu.iter().zip(gt.safe_prob()).map(|(p, s)| p * s).sum())
}

/// `p*_help(y_i > mu) = sum_j mu_j p*_help(y_i > y_j)`, self-comparison included.
pub fn help_vs_policy(mu: &[f64], gt: &GroundTruth, i: usize) -> Result<f64> {
    check_dims(mu, gt)?;
    if i >= gt.n() {
        return Err(invalid(format!("action {i} out of range")));
    }
    Ok(mu.iter().zip(&gt.help_pref()[i]).map(|(p, h)| p * h).sum())
}

/// `g(y_i)` under distribution `mu`.
pub fn global_reward(mu: &[f64], gt: &GroundTruth, i: usize, cfg: &RewardConfig) -> Result<f64> {
    let e_s = expected_safety(mu, gt)?;
    let ph = help_vs_policy(mu, gt, i)?;
    Ok((gt.safe(i) + cfg.shift_p1 + cfg.resolve_a1(e_s)) * (ph + cfg.shift_p2 + cfg.a2))
}

/// `g` for every action under `mu`.
pub fn global_rewards(mu: &[f64], gt: &GroundTruth, cfg: &RewardConfig) -> Result<Vec<f64>> {
    let e_s = expected_safety(mu, gt)?;
    let a1 = cfg.resolve_a1(e_s);
    Ok((0..gt.n())
        .map(|i| {
            let ph: f64 = mu.iter().zip(&gt.help_pref()[i]).map(|(p, h)| p * h).sum();
            (gt.safe(i) + cfg.shift_p1 + a1) * (ph + cfg.shift_p2 + cfg.a2)
        })
        .collect())
}

/// Where `g` is evaluated while solving for the optimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardEvaluation {
    /// `g` under the solution itself.
    #[default]
    FixedPoint,
    /// `g` under `pi_ref`; one Gibbs reweighting, no iteration.
    FrozenAtReference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub evaluation: RewardEvaluation,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tau: 1.0, tol: 1e-12, max_iter: 10_000, damping: 0.5, evaluation: RewardEvaluation::FixedPoint }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub probabilities: Vec<f64>,
}

/// `pi_ref(y) exp(g(y) / tau) / Z` with `g` evaluated under `mu`.
pub fn gibbs_update(ref_logits: &[f64], mu: &[f64], gt: &GroundTruth, cfg: &RewardConfig, tau: f64) -> Result<Vec<f64>> {
    let g = global_rewards(mu, gt, cfg)?;
    let z: Vec<f64> = ref_logits.iter().zip(&g).map(|(r, gi)| r + gi / tau).collect();
    Ok(softmax_unchecked(&z))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves `pi = Update(pi)` by `pi_{k+1} = (1 - d) pi_k + d Update(pi_k)`.
///
/// Returns the first iterate whose residual `max_i |pi_i - Update(pi)_i|`
/// is below `tol`.
pub fn optimal_policy(
    pi_ref: &TabularPolicy,
    gt: &GroundTruth,
    cfg: &RewardConfig,
    opts: &FixedPointOptions,
) -> Result<(TabularPolicy, ConvergenceReport)> {
    if !(opts.tau > 0.0) {
        return Err(invalid("tau must be positive"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(invalid("damping must lie in (0, 1]"));
    }
    if pi_ref.len() != gt.n() {
        return Err(invalid("reference policy and ground truth disagree on the action count"));
    }
    let ref_logits = pi_ref.logits();
    let ref_probs = pi_ref.probs();

    if opts.evaluation == RewardEvaluation::FrozenAtReference {
        let pi = gibbs_update(ref_logits, &ref_probs, gt, cfg, opts.tau)?;
        // residual still reports self-consistency; a frozen reward generally is not a fixed point
        let residual = max_abs_diff(&pi, &gibbs_update(ref_logits, &pi, gt, cfg, opts.tau)?);
        let report = ConvergenceReport { iterations: 1, residual, converged: true, probabilities: pi.clone() };
        return Ok((TabularPolicy::from_probs(&pi)?, report));
    }

    let mut pi = ref_probs;
    let mut best = (f64::INFINITY, pi.clone());
    for iter in 0..=opts.max_iter {
        let update = gibbs_update(ref_logits, &pi, gt, cfg, opts.tau)?;
        let residual = max_abs_diff(&pi, &update);
        if residual < best.0 {
            best = (residual, pi.clone());
        }
        if residual < opts.tol {
            let report = ConvergenceReport { iterations: iter, residual, converged: true, probabilities: pi.clone() };
            return Ok((TabularPolicy::from_probs(&pi)?, report));
        }
        for (p, u) in pi.iter_mut().zip(&update) {
            *p = (1.0 - opts.damping) * *p + opts.damping * u;
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, residual: best.0, best: best.1 })
}
