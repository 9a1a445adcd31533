use bfpo_core::dataset::{all_pairs_dataset, helpful_pairs_dataset, LabelMode};
use bfpo_core::equivalence::{audit_equivalence, AuditInputs, PASS_TOL};
use bfpo_core::optim::{implied_scores, least_squares_oracle, train, TrainConfig, TrainData};
use bfpo_core::reward::{optimal_policy, FixedPointOptions};
use bfpo_core::truth::product_ground_truth;
use bfpo_core::{illustrative_ground_truth, LabelConfig, LossKind, RewardConfig, TabularPolicy};
use proptest::prelude::*;

fn illustrative() -> TrainData {
    TrainData::single(all_pairs_dataset(&illustrative_ground_truth(), LabelMode::Deterministic).unwrap())
}

#[test]
fn bfpo_ranking_holds_across_tau() {
    let u = TabularPolicy::uniform(4).unwrap();
    for tau in [0.1, 1.0, 10.0] {
        let kind = LossKind::Bfpo(LabelConfig::canonical(0.5, tau).unwrap());
        let r = train(&u, &u, &illustrative(), &kind, &TrainConfig::default()).unwrap();
        assert_eq!(r.ranking, vec![0, 2, 3, 1], "tau {tau}: {:?}", r.final_probs);
    }
}

#[test]
fn ipo_full_batch_matches_oracle() {
    let data = illustrative();
    let kind = LossKind::Ipo { tau: 1.0 };
    let oracle = least_squares_oracle(data.primary.records(), 4, &kind).unwrap();
    let u = TabularPolicy::uniform(4).unwrap();
    let r = train(&u, &u, &data, &kind, &TrainConfig { steps: 20_000, full_batch: true, ..TrainConfig::default() }).unwrap();
    let s = implied_scores(&r.final_theta, u.logits());
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{s:?} vs {oracle:?}");
    }
}

#[test]
fn oracle_respects_a_non_uniform_reference() {
    let data = illustrative();
    let kind = LossKind::Bfpo(LabelConfig::canonical(0.5, 1.0).unwrap());
    let oracle = least_squares_oracle(data.primary.records(), 4, &kind).unwrap();
    let pi_ref = TabularPolicy::new(vec![0.4, -0.3, 0.1, 0.0]).unwrap();
    let cfg = TrainConfig { steps: 40_000, lr: 1e-3, full_batch: true, ..TrainConfig::default() };
    let r = train(&pi_ref, &pi_ref, &data, &kind, &cfg).unwrap();
    let s = implied_scores(&r.final_theta, pi_ref.logits());
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-4, "{s:?} vs {oracle:?}");
    }
}

#[test]
fn buffered_training_keeps_safe_actions_on_top() {
    let gt = illustrative_ground_truth();
    let safety = all_pairs_dataset(&gt, LabelMode::Deterministic).unwrap();
    let helpful = helpful_pairs_dataset(&gt).unwrap();
    let u = TabularPolicy::uniform(4).unwrap();
    let kind = LossKind::Bfpo(LabelConfig::canonical(0.5, 1.0).unwrap());
    let cfg = TrainConfig { buffered: true, ..TrainConfig::default() };
    let r = train(&u, &u, &TrainData::buffered(safety, helpful), &kind, &cfg).unwrap();
    assert_eq!(r.ranking[0], 0);
    assert!(r.final_probs.iter().all(|p| p.is_finite()));
}

#[test]
fn run_json_round_trips() {
    let u = TabularPolicy::uniform(4).unwrap();
    let r = train(&u, &u, &illustrative(), &LossKind::Dpo { tau: 1.0 }, &TrainConfig { steps: 20, ..TrainConfig::default() }).unwrap();
    let back: bfpo_core::optim::RunRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}

fn product_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=4, 1usize..=2).prop_flat_map(|(a, b)| (prop::collection::vec(-2.0f64..2.0, a), prop::collection::vec(0.0f64..=1.0, b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decoupled_audits_pass(
        (help, safe) in product_strategy(), alpha in -1.0f64..1.0, tau in 0.2f64..5.0, seed in 0u64..1000,
    ) {
        let gt = product_ground_truth(&help, &safe).unwrap();
        prop_assume!(gt.n() >= 2);
        let label = LabelConfig::canonical(alpha, tau).unwrap();
        let rep = audit_equivalence(&AuditInputs::canonical(gt, label).unwrap(), 20, seed, PASS_TOL).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep);
    }

    #[test]
    fn optimal_policy_ignores_reference_gauge(shift in -3.0f64..3.0) {
        let gt = illustrative_ground_truth();
        let cfg = RewardConfig::canonical();
        let base = TabularPolicy::new(vec![0.2, -0.1, 0.0, 0.3]).unwrap();
        let moved = TabularPolicy::new(base.logits().iter().map(|x| x + shift).collect()).unwrap();
        let (a, _) = optimal_policy(&base, &gt, &cfg, &FixedPointOptions::default()).unwrap();
        let (b, _) = optimal_policy(&moved, &gt, &cfg, &FixedPointOptions::default()).unwrap();
        for (p, q) in a.probs().iter().zip(b.probs()) {
            prop_assert!((p - q).abs() < 1e-10);
        }
    }
}
