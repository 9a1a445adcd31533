//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bfpo_core::dataset::{all_pairs_dataset, helpful_pairs_dataset, LabelMode, PreferenceDataset};
use bfpo_core::equivalence::AuditInputs;
use bfpo_core::optim::{TrainConfig, TrainData};
use bfpo_core::truth::{ground_truth_from_bt_scores, ground_truth_from_order, product_ground_truth};
use bfpo_core::{ActionSpace, GroundTruth, LabelConfig, LossKind, PairSampling, RewardConfig, TabularPolicy};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TruthSpec {
    /// Helpfulness order (most helpful first) and binary safety flags.
    Order { order: Vec<usize>, safe: Vec<u8> },
    /// Bradley-Terry helpfulness scores.
    Bt { scores: Vec<f64>, safe_prob: Vec<f64> },
    /// Decoupled product of help levels and safety levels.
    Product { help_scores: Vec<f64>, safe_prob: Vec<f64> },
    Explicit { help_pref: Vec<Vec<f64>>, safe_prob: Vec<f64> },
}

impl TruthSpec {
    pub fn build(&self) -> Result<GroundTruth> {
        Ok(match self {
            TruthSpec::Order { order, safe } => ground_truth_from_order(order, safe)?,
            TruthSpec::Bt { scores, safe_prob } => ground_truth_from_bt_scores(scores, safe_prob)?,
            TruthSpec::Product { help_scores, safe_prob } => product_ground_truth(help_scores, safe_prob)?,
            TruthSpec::Explicit { help_pref, safe_prob } => GroundTruth::new(help_pref.clone(), safe_prob.clone())?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase", deny_unknown_fields)]
pub enum LabelSpec {
    Canonical { alpha: f64 },
    General { b1: f64, b2: f64, b3: f64 },
}

impl LabelSpec {
    pub fn build(&self, tau: f64) -> Result<LabelConfig> {
        Ok(match *self {
            LabelSpec::Canonical { alpha } => LabelConfig::canonical(alpha, tau)?,
            LabelSpec::General { b1, b2, b3 } => LabelConfig::general(b1, b2, b3, tau)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bfpo,
    Dpo,
    Ipo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_n_theta() -> usize {
    100
}
fn default_tol() -> f64 {
    bfpo_core::equivalence::PASS_TOL
}
fn default_tau() -> f64 {
    1.0
}
fn default_runs() -> usize {
    1
}
fn default_methods() -> Vec<Method> {
    vec![Method::Bfpo]
}
fn default_label() -> LabelSpec {
    LabelSpec::Canonical { alpha: 0.5 }
}
fn default_labels() -> LabelMode {
    LabelMode::Deterministic
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { n_theta: default_n_theta(), tol: default_tol() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ground_truth: TruthSpec,
    #[serde(default = "default_labels")]
    pub labels: LabelMode,
    #[serde(default = "default_label")]
    pub label: LabelSpec,
    /// Defaults to the reward matched to `label`.
    #[serde(default)]
    pub reward: Option<RewardConfig>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    /// JSONL dataset to train on instead of one generated from the ground truth.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub audit: AuditSpec,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The illustrative four-action experiment.
    pub fn illustrative(n_runs: usize) -> Self {
        Self {
            ground_truth: TruthSpec::Order { order: vec![0, 1, 2, 3], safe: vec![1, 0, 1, 0] },
            labels: LabelMode::Deterministic,
            label: LabelSpec::Canonical { alpha: 0.5 },
            reward: None,
            tau: 1.0,
            train: TrainConfig::default(),
            methods: vec![Method::Dpo, Method::Ipo, Method::Bfpo],
            n_runs,
            dataset: None,
            output_dir: None,
            audit: AuditSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let gt = self.ground_truth.build()?;
        self.label.build(self.tau)?;
        self.train.validate(gt.n())?;
        if self.methods.is_empty() {
            bail!("methods must not be empty");
        }
        if self.n_runs < 1 {
            bail!("n_runs must be at least 1");
        }
        if self.audit.n_theta < 2 || !(self.audit.tol > 0.0) {
            bail!("audit needs n_theta >= 2 and a positive tol");
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<GroundTruth> {
        self.ground_truth.build()
    }

    pub fn label_config(&self) -> Result<LabelConfig> {
        self.label.build(self.tau)
    }

    pub fn reward_config(&self) -> Result<RewardConfig> {
        Ok(self.reward.unwrap_or(RewardConfig::matching(&self.label_config()?)))
    }

    pub fn loss(&self, method: Method) -> Result<LossKind> {
        Ok(match method {
            Method::Bfpo => LossKind::Bfpo(self.label_config()?),
            Method::Dpo => LossKind::Dpo { tau: self.tau },
            Method::Ipo => LossKind::Ipo { tau: self.tau },
        })
    }

    pub fn generate(&self) -> Result<(GroundTruth, PreferenceDataset)> {
        let gt = self.truth()?;
        let data = all_pairs_dataset(&gt, self.labels)?;
        Ok((gt, data))
    }

    pub fn train_data(&self) -> Result<TrainData> {
        let gt = self.truth()?;
        let primary = match &self.dataset {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading dataset {}", path.display()))?;
                PreferenceDataset::from_jsonl(&text, ActionSpace::new(gt.n())?)?
            }
            None => all_pairs_dataset(&gt, self.labels)?,
        };
        Ok(if self.train.buffered { TrainData::buffered(primary, helpful_pairs_dataset(&gt)?) } else { TrainData::single(primary) })
    }

    pub fn audit_inputs(&self) -> Result<AuditInputs> {
        let gt = self.truth()?;
        let n = gt.n();
        Ok(AuditInputs {
            pi_ref: TabularPolicy::uniform(n)?,
            gt,
            label: self.label_config()?,
            reward: self.reward_config()?,
            tau: self.tau,
            sampling: PairSampling::uniform(n)?,
            eval_policy: None,
        })
    }
}
