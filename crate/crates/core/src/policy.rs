//! Finite action spaces and softmax policies over them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A finite set of actions `y_0 .. y_{n-1}`, optionally with display names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawActionSpace")]
pub struct ActionSpace {
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawActionSpace {
    n: usize,
    #[serde(default)]
    names: Option<Vec<String>>,
}

impl TryFrom<RawActionSpace> for ActionSpace {
    type Error = crate::Error;

    fn try_from(raw: RawActionSpace) -> Result<Self> {
        match raw.names {
            Some(names) => Self::named(names).and_then(|s| {
                if s.n == raw.n {
                    Ok(s)
                } else {
                    Err(invalid(format!("n = {} but {} names given", raw.n, s.n)))
                }
            }),
            None => Self::new(raw.n),
        }
    }
}

impl ActionSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("action space needs at least 2 actions, got {n}")));
        }
        Ok(Self { n, names: None })
    }

    pub fn named(names: Vec<String>) -> Result<Self> {
        let n = names.len();
        if n < 2 {
            return Err(invalid(format!("action space needs at least 2 actions, got {n}")));
        }
        let mut sorted: Vec<&String> = names.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("action names must be distinct"));
        }
        Ok(Self { n, names: Some(names) })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Display label for action `i`: its name if present, else `y{i+1}`.
    pub fn label(&self, i: usize) -> String {
        match &self.names {
            Some(names) => names[i].clone(),
            None => format!("y{}", i + 1),
        }
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(invalid("non-finite logit"));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

/// `pi_theta(y_i) = softmax(theta)_i` over a single (context-free) action set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TabularPolicy {
    logits: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TabularPolicy {
    type Error = crate::Error;

    fn try_from(logits: Vec<f64>) -> Result<Self> {
        Self::new(logits)
    }
}

impl From<TabularPolicy> for Vec<f64> {
    fn from(p: TabularPolicy) -> Self {
        p.logits
    }
}

impl TabularPolicy {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(invalid(format!("policy needs at least 2 logits, got {}", logits.len())));
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite logit"));
        }
        Ok(Self { logits })
    }

    /// Zero logits: the uniform policy.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    /// Policy whose softmax reproduces `probs` (logits are `ln p`).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(invalid("probabilities must be strictly positive and finite"));
        }
        Self::new(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax_unchecked(&self.logits)
    }

    /// The logits projected onto the zero-sum subspace (the gauge-fixed scores).
    pub fn centered_logits(&self) -> Vec<f64> {
        center(&self.logits)
    }
}

pub(crate) fn center(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

/// Probability vector of a policy.
pub fn policy_probs(policy: &TabularPolicy) -> Vec<f64> {
    policy.probs()
}

/// Indices sorted by decreasing probability; ties go to the lower index.
pub fn ranking(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// One logit vector per context. Every operation maps over contexts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextualPolicy {
    pub contexts: Vec<TabularPolicy>,
}

impl ContextualPolicy {
    pub fn new(contexts: Vec<TabularPolicy>) -> Result<Self> {
        let Some(first) = contexts.first() else {
            return Err(invalid("at least one context required"));
        };
        if contexts.iter().any(|c| c.len() != first.len()) {
            return Err(invalid("all contexts must share one action space"));
        }
        Ok(Self { contexts })
    }

    pub fn probs(&self) -> Vec<Vec<f64>> {
        self.contexts.iter().map(TabularPolicy::probs).collect()
    }
}
