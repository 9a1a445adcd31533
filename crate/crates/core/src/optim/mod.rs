//! Seeded Adam training of tabular policies.
//!
//! RNG schema: one `ChaCha8Rng` per run, seeded from `TrainConfig::seed`.
//! Each step draws `batch_size` indices uniformly with replacement from the
//! primary dataset, then (buffered mode only) `batch_size` indices from the
//! helpful dataset. Nothing else consumes randomness; full-batch runs draw
//! nothing.

mod oracle;

pub use oracle::{implied_scores, least_squares_oracle};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PreferenceDataset, PreferenceRecord, Source};
use crate::error::{invalid, Result};
use crate::labeling::LabelTable;
use crate::losses::{loss_and_grad_logits, LossKind};
use crate::par;
use crate::policy::{ranking, softmax_unchecked, TabularPolicy};

pub const RNG_SCHEMA: &str = "chacha8; per step: batch_size uniform indices into the primary dataset, then batch_size into the helpful dataset when buffered; none when full_batch";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Use every record each step instead of sampling.
    #[serde(default)]
    pub full_batch: bool,
    #[serde(default = "beta1")]
    pub beta1: f64,
    #[serde(default = "beta2")]
    pub beta2: f64,
    #[serde(default = "eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trainable_mask: Option<Vec<bool>>,
    #[serde(default)]
    pub buffered: bool,
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl Default for TrainConfig {
    /// The illustrative-experiment settings: lr 0.01, 1800 steps, batch 32.
    fn default() -> Self {
        Self {
            steps: 1800,
            lr: 0.01,
            batch_size: 32,
            full_batch: false,
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
            seed: 0,
            trainable_mask: None,
            buffered: false,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.steps < 1 {
            return Err(invalid("steps must be at least 1"));
        }
        // lr = 0 is allowed as a null update
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(invalid(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if !self.full_batch && self.batch_size < 1 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid("eps must be positive"));
        }
        if let Some(mask) = &self.trainable_mask {
            if mask.len() != n {
                return Err(invalid(format!("trainable_mask has {} entries for {n} logits", mask.len())));
            }
        }
        Ok(())
    }
}

/// Training data: the primary (safety) dataset and, for buffered training,
/// the helpful dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub primary: PreferenceDataset,
    pub helpful: Option<PreferenceDataset>,
}

impl TrainData {
    pub fn single(primary: PreferenceDataset) -> Self {
        Self { primary, helpful: None }
    }

    pub fn buffered(safety: PreferenceDataset, helpful: PreferenceDataset) -> Self {
        Self { primary: safety, helpful: Some(helpful) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: TrainConfig,
    pub loss: LossKind,
    pub method: String,
    pub dataset_digest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub helpful_digest: Option<String>,
    pub seed: u64,
    pub n_actions: usize,
    pub rng: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label_table: Option<LabelTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trajectory: Vec<StepRecord>,
    pub final_theta: Vec<f64>,
    pub final_probs: Vec<f64>,
    pub ranking: Vec<usize>,
    pub manifest: Manifest,
    /// Kept apart from the manifest so everything else is byte-stable.
    pub wall_clock_seconds: f64,
}

pub fn csv_header(n: usize) -> String {
    let mut h = String::from("step,seed,method,loss");
    for i in 0..n {
        h.push_str(&format!(",p_{i}"));
    }
    h
}

impl RunRecord {
    /// Trajectory rows without the header, one line per step.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for s in &self.trajectory {
            csv_line(&mut out, s.step, &self.manifest.seed.to_string(), &self.manifest.method, s.loss, &s.probs);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", csv_header(self.final_probs.len()), self.csv_rows())
    }

    /// JSON of everything except the wall clock.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("run records serialize");
        v.as_object_mut().expect("object").remove("wall_clock_seconds");
        serde_json::to_string(&v).expect("value serializes")
    }
}

fn csv_line(out: &mut String, step: usize, seed: &str, method: &str, loss: f64, probs: &[f64]) {
    out.push_str(&format!("{step},{seed},{method},{loss}"));
    for p in probs {
        out.push_str(&format!(",{p}"));
    }
    out.push('\n');
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for k in 0..theta.len() {
            if let Some(mask) = &cfg.trainable_mask {
                if !mask[k] {
                    continue;
                }
            }
            let g = grad[k];
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            theta[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, records: &[PreferenceRecord], k: usize, out: &mut Vec<PreferenceRecord>) {
    out.clear();
    for _ in 0..k {
        out.push(records[rng.random_range(0..records.len())]);
    }
}

fn check_data(data: &TrainData, cfg: &TrainConfig, n: usize) -> Result<()> {
    if data.primary.is_empty() {
        return Err(invalid("training dataset is empty"));
    }
    if data.primary.action_space().len() != n {
        return Err(invalid("dataset action count differs from the policy"));
    }
    match (&data.helpful, cfg.buffered) {
        (None, true) => Err(invalid("buffered training needs a helpful dataset")),
        (Some(h), _) => {
            if h.is_empty() {
                return Err(invalid("helpful dataset is empty"));
            }
            if h.action_space().len() != n {
                return Err(invalid("helpful dataset action count differs from the policy"));
            }
            if h.records().iter().any(|r| r.source != Source::Helpful || !r.i_safe_first || !r.i_safe_second) {
                return Err(invalid("helpful records must carry source helpful and I_safe = 1 on both sides"));
            }
            Ok(())
        }
        (None, false) => Ok(()),
    }
}

/// Runs `cfg.steps` Adam updates from `init` and records the trajectory.
///
/// Unbuffered runs with a helpful dataset train on the concatenation of both
/// datasets.
pub fn train(init: &TabularPolicy, pi_ref: &TabularPolicy, data: &TrainData, kind: &LossKind, cfg: &TrainConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let n = init.len();
    if pi_ref.len() != n {
        return Err(invalid("policy and reference sizes differ"));
    }
    kind.validate()?;
    cfg.validate(n)?;
    check_data(data, cfg, n)?;

    let pooled: Vec<PreferenceRecord>;
    let (primary, helpful): (&[PreferenceRecord], Option<&[PreferenceRecord]>) = match (&data.helpful, cfg.buffered) {
        (Some(h), true) => (data.primary.records(), Some(h.records())),
        (Some(h), false) => {
            pooled = data.primary.records().iter().chain(h.records()).copied().collect();
            (&pooled, None)
        }
        (None, _) => (data.primary.records(), None),
    };

    let reference = pi_ref.logits();
    let mut theta = init.logits().to_vec();
    let mut adam = Adam::new(n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut trajectory = Vec::with_capacity(cfg.steps);

    for step in 1..=cfg.steps {
        let (mut loss, mut grad) = if cfg.full_batch {
            loss_and_grad_logits(kind, &theta, reference, primary)?
        } else {
            draw(&mut rng, primary, cfg.batch_size, &mut batch);
            loss_and_grad_logits(kind, &theta, reference, &batch)?
        };
        if let Some(h) = helpful {
            let (hl, hg) = if cfg.full_batch {
                loss_and_grad_logits(kind, &theta, reference, h)?
            } else {
                draw(&mut rng, h, cfg.batch_size, &mut batch);
                loss_and_grad_logits(kind, &theta, reference, &batch)?
            };
            loss += hl;
            grad.iter_mut().zip(hg).for_each(|(g, x)| *g += x);
        }
        adam.step(&mut theta, &grad, cfg);
        trajectory.push(StepRecord { step, loss, probs: softmax_unchecked(&theta) });
    }

    let final_probs = softmax_unchecked(&theta);
    let manifest = Manifest {
        config: cfg.clone(),
        loss: *kind,
        method: kind.name().to_string(),
        dataset_digest: data.primary.digest(),
        helpful_digest: data.helpful.as_ref().map(|h| h.digest()),
        seed: cfg.seed,
        n_actions: n,
        rng: RNG_SCHEMA.to_string(),
        label_table: match kind {
            LossKind::Bfpo(l) => Some(l.label_table()),
            _ => None,
        },
    };
    Ok(RunRecord {
        trajectory,
        ranking: ranking(&final_probs),
        final_probs,
        final_theta: theta,
        manifest,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatedRuns {
    pub runs: Vec<RunRecord>,
    /// Per-step averages of loss and probabilities across runs.
    pub mean: Vec<StepRecord>,
}

impl RepeatedRuns {
    pub fn mean_final_probs(&self) -> &[f64] {
        &self.mean.last().expect("at least one step").probs
    }

    pub fn mean_ranking(&self) -> Vec<usize> {
        ranking(self.mean_final_probs())
    }

    /// Per-run rows followed by the mean rows (seed column `mean`).
    pub fn csv_rows(&self) -> String {
        let mut out: String = self.runs.iter().map(|r| r.csv_rows()).collect();
        let method = &self.runs[0].manifest.method;
        for s in &self.mean {
            csv_line(&mut out, s.step, "mean", method, s.loss, &s.probs);
        }
        out
    }
}

/// `n_runs` independent runs with seeds `base_seed + k`, executed concurrently.
pub fn train_repeated(
    init: &TabularPolicy,
    pi_ref: &TabularPolicy,
    data: &TrainData,
    kind: &LossKind,
    cfg: &TrainConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<RepeatedRuns> {
    if n_runs < 1 {
        return Err(invalid("n_runs must be at least 1"));
    }
    let runs = par::map_indexed(n_runs, |k| train(init, pi_ref, data, kind, &cfg.clone().with_seed(base_seed + k as u64)));
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let m = n_runs as f64;
    let n = init.len();
    let mean = (0..cfg.steps)
        .map(|t| {
            let mut probs = vec![0.0; n];
            let mut loss = 0.0;
            for r in &runs {
                let s = &r.trajectory[t];
                loss += s.loss;
                probs.iter_mut().zip(&s.probs).for_each(|(a, b)| *a += b);
            }
            probs.iter_mut().for_each(|p| *p /= m);
            StepRecord { step: t + 1, loss: loss / m, probs }
        })
        .collect();
    Ok(RepeatedRuns { runs, mean })
}
