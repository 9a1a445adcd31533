//! Preference records, datasets and their JSONL form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::policy::ActionSpace;
use crate::truth::GroundTruth;

/// Which dataset a record came from. Helpful records carry safe labels on
/// both sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Safety,
    Helpful,
}

mod bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("label {other} is not binary"))),
        }
    }
}

/// An oriented pair `(first, second)` with its helpfulness bit and the two
/// safety bits. Orientation into (more helpful, less helpful) happens at
/// loss-evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceRecord {
    pub first: usize,
    pub second: usize,
    #[serde(with = "bit")]
    pub i_help_first: bool,
    #[serde(with = "bit")]
    pub i_safe_first: bool,
    #[serde(with = "bit")]
    pub i_safe_second: bool,
    pub source: Source,
}

/// A record resolved into (more helpful, less helpful) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrientedPair {
    pub hw: usize,
    pub hl: usize,
    pub safe_hw: bool,
    pub safe_hl: bool,
}

impl PreferenceRecord {
    pub fn new(first: usize, second: usize, i_help_first: bool, i_safe_first: bool, i_safe_second: bool, source: Source) -> Result<Self> {
        let r = Self { first, second, i_help_first, i_safe_first, i_safe_second, source };
        r.validate()?;
        Ok(r)
    }

    /// A record from the helpfulness dataset: both responses labelled safe.
    pub fn helpful(first: usize, second: usize, i_help_first: bool) -> Result<Self> {
        Self::new(first, second, i_help_first, true, true, Source::Helpful)
    }

    pub fn validate(&self) -> Result<()> {
        if self.first == self.second {
            return Err(invalid(format!("record compares action {} with itself", self.first)));
        }
        if self.source == Source::Helpful && !(self.i_safe_first && self.i_safe_second) {
            return Err(invalid("helpful records must carry I_safe = 1 on both responses"));
        }
        Ok(())
    }

    pub fn oriented(&self) -> OrientedPair {
        if self.i_help_first {
            OrientedPair { hw: self.first, hl: self.second, safe_hw: self.i_safe_first, safe_hl: self.i_safe_second }
        } else {
            OrientedPair { hw: self.second, hl: self.first, safe_hw: self.i_safe_second, safe_hl: self.i_safe_first }
        }
    }

    /// The same observation stored in the opposite orientation.
    pub fn swapped(&self) -> Self {
        Self {
            first: self.second,
            second: self.first,
            i_help_first: !self.i_help_first,
            i_safe_first: self.i_safe_second,
            i_safe_second: self.i_safe_first,
            source: self.source,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceDataset {
    records: Vec<PreferenceRecord>,
    action_space: ActionSpace,
}

impl PreferenceDataset {
    pub fn new(records: Vec<PreferenceRecord>, action_space: ActionSpace) -> Result<Self> {
        let n = action_space.len();
        for (k, r) in records.iter().enumerate() {
            r.validate()?;
            if r.first >= n || r.second >= n {
                return Err(invalid(format!("record {k} indexes outside 0..{n}")));
            }
        }
        Ok(Self { records, action_space })
    }

    pub fn records(&self) -> &[PreferenceRecord] {
        &self.records
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One compact JSON object per line, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, action_space: ActionSpace) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, line)| serde_json::from_str(line).map_err(|e| invalid(format!("line {}: {e}", k + 1))))
            .collect::<Result<Vec<PreferenceRecord>>>()?;
        Self::new(records, action_space)
    }

    /// SHA-256 of the JSONL encoding, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// How labels are drawn from a ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum LabelMode {
    /// Labels equal the ground-truth values; requires a deterministic truth.
    Deterministic,
    /// Each label is an independent Bernoulli draw. Per record the draw order
    /// is help, safe(first), safe(second); records in (first, second) order.
    Bernoulli { seed: u64 },
}

/// One safety-sourced record per ordered pair `(i, j)`, `i != j`, `i`-major.
pub fn all_pairs_dataset(gt: &GroundTruth, mode: LabelMode) -> Result<PreferenceDataset> {
    let n = gt.n();
    let space = ActionSpace::new(n)?;
    let mut records = Vec::with_capacity(n * (n - 1));
    match mode {
        LabelMode::Deterministic => {
            if !gt.is_deterministic() {
                return Err(invalid("deterministic labels need preferences in {0, 1/2, 1} and binary safety"));
            }
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let p = gt.help(i, j);
                    if p == 0.5 {
                        return Err(invalid(format!("pair ({i}, {j}) is tied; a deterministic label is undefined")));
                    }
                    records.push(PreferenceRecord {
                        first: i,
                        second: j,
                        i_help_first: p == 1.0,
                        i_safe_first: gt.safe(i) == 1.0,
                        i_safe_second: gt.safe(j) == 1.0,
                        source: Source::Safety,
                    });
                }
            }
        }
        LabelMode::Bernoulli { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let help = rng.random_bool(gt.help(i, j));
                    let sf = rng.random_bool(gt.safe(i));
                    let ss = rng.random_bool(gt.safe(j));
                    records.push(PreferenceRecord {
                        first: i,
                        second: j,
                        i_help_first: help,
                        i_safe_first: sf,
                        i_safe_second: ss,
                        source: Source::Safety,
                    });
                }
            }
        }
    }
    PreferenceDataset::new(records, space)
}

/// Helpfulness-only dataset over all ordered pairs of a ground truth, with
/// `I_safe = 1` on both sides. Used as `D_h` in buffered training.
pub fn helpful_pairs_dataset(gt: &GroundTruth) -> Result<PreferenceDataset> {
    let n = gt.n();
    let mut records = Vec::new();
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let p = gt.help(i, j);
            if p != 0.0 && p != 1.0 {
                return Err(invalid(format!("pair ({i}, {j}) has no deterministic helpfulness label")));
            }
            records.push(PreferenceRecord::helpful(i, j, p == 1.0)?);
        }
    }
    PreferenceDataset::new(records, ActionSpace::new(n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth::{ground_truth_from_bt_scores, ground_truth_from_order};

    fn illustrative() -> GroundTruth {
        ground_truth_from_order(&[0, 1, 2, 3], &[1, 0, 1, 0]).unwrap()
    }

    #[test]
    fn illustrative_dataset_has_twelve_records() {
        let ds = all_pairs_dataset(&illustrative(), LabelMode::Deterministic).unwrap();
        assert_eq!(ds.len(), 12);
        let r = ds.records()[0];
        assert_eq!((r.first, r.second), (0, 1));
        assert!(r.i_help_first && r.i_safe_first && !r.i_safe_second);
        assert!(ds.records().iter().all(|r| r.source == Source::Safety));
    }

    #[test]
    fn two_actions_give_two_records() {
        let gt = ground_truth_from_order(&[1, 0], &[1, 1]).unwrap();
        assert_eq!(all_pairs_dataset(&gt, LabelMode::Deterministic).unwrap().len(), 2);
    }

    #[test]
    fn bernoulli_is_seed_deterministic() {
        let gt = ground_truth_from_bt_scores(&[0.4, -0.1, 1.0], &[0.3, 0.8, 0.5]).unwrap();
        let a = all_pairs_dataset(&gt, LabelMode::Bernoulli { seed: 7 }).unwrap();
        let b = all_pairs_dataset(&gt, LabelMode::Bernoulli { seed: 7 }).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn deterministic_mode_rejects_fractional_truth() {
        let gt = ground_truth_from_bt_scores(&[0.4, -0.1], &[1.0, 0.0]).unwrap();
        assert!(all_pairs_dataset(&gt, LabelMode::Deterministic).is_err());
    }

    #[test]
    fn deterministic_mode_is_idempotent() {
        let a = all_pairs_dataset(&illustrative(), LabelMode::Deterministic).unwrap();
        let b = all_pairs_dataset(&illustrative(), LabelMode::Deterministic).unwrap();
        assert_eq!(a.to_jsonl().as_bytes(), b.to_jsonl().as_bytes());
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn jsonl_line_format() {
        let ds = all_pairs_dataset(&illustrative(), LabelMode::Deterministic).unwrap();
        let first = ds.to_jsonl().lines().next().unwrap().to_string();
        assert_eq!(
            first,
            r#"{"first":0,"second":1,"i_help_first":1,"i_safe_first":1,"i_safe_second":0,"source":"safety"}"#
        );
        let spaced = r#"{"first": 0, "second": 1, "i_help_first": 1, "i_safe_first": 1, "i_safe_second": 0, "source": "safety"}"#;
        let r: PreferenceRecord = serde_json::from_str(spaced).unwrap();
        assert_eq!(r, ds.records()[0]);
        let back = PreferenceDataset::from_jsonl(&ds.to_jsonl(), ActionSpace::new(4).unwrap()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn record_validation() {
        assert!(PreferenceRecord::new(1, 1, true, true, true, Source::Safety).is_err());
        assert!(PreferenceRecord::new(0, 1, true, false, true, Source::Helpful).is_err());
        let bad = r#"{"first":0,"second":1,"i_help_first":2,"i_safe_first":1,"i_safe_second":0,"source":"safety"}"#;
        assert!(serde_json::from_str::<PreferenceRecord>(bad).is_err());
        let out_of_range = PreferenceRecord::new(0, 5, true, true, true, Source::Safety).unwrap();
        assert!(PreferenceDataset::new(vec![out_of_range], ActionSpace::new(3).unwrap()).is_err());
    }

    #[test]
    fn orientation_and_swap() {
        let r = PreferenceRecord::new(2, 0, false, false, true, Source::Safety).unwrap();
        let o = r.oriented();
        assert_eq!((o.hw, o.hl, o.safe_hw, o.safe_hl), (0, 2, true, false));
        assert_eq!(r.swapped().oriented(), o);
        assert_eq!(r.swapped().swapped(), r);
    }

    #[test]
    fn helpful_dataset_is_all_safe() {
        let ds = helpful_pairs_dataset(&illustrative()).unwrap();
        assert_eq!(ds.len(), 12);
        assert!(ds.records().iter().all(|r| r.i_safe_first && r.i_safe_second && r.source == Source::Helpful));
    }
}
