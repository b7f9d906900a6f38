//! Property tests for the numeric core: IoU, the penalty branch, group
//! normalization, KL positivity, masking, and frame-budget safety.

use clipgrounder_core::cliptool::{
    crop_plan, effective_density, skim_plan, uniform_timestamps, SamplingConfig,
};
use clipgrounder_core::grpo::{group_advantages, kl_estimate, objective_terms, TokenLogProbPair};
use clipgrounder_core::masking::{masked_token_count, unified_mask, MessageSpan, Role};
use clipgrounder_core::rewards::{penalty_aware_iou, temporal_iou, RewardConfig};
use clipgrounder_core::types::{TemporalInterval, VideoMeta};
use proptest::prelude::*;

fn arb_interval(max: f64) -> impl Strategy<Value = TemporalInterval> {
    (0.0f64..max, 0.0f64..max)
        .prop_map(|(a, b)| TemporalInterval::new(a.min(b), a.max(b)).unwrap())
}

/// The aggregate metrics agree with plain brute-force loops over 1000
/// randomized records to 1e-12.
#[test]
fn aggregates_match_brute_force_on_randomized_records() {
    use clipgrounder_core::evalkit::{accuracy, miou, recall_at_iou, EvalRecord};
    use clipgrounder_core::types::TaskKind;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(424242);
    let letters = ["A", "B", "C", "D"];
    let records: Vec<EvalRecord> = (0..1000)
        .map(|i| {
            let d = 50.0 + rng.gen::<f64>() * 5000.0;
            let draw = |rng: &mut ChaCha8Rng| {
                let a = rng.gen::<f64>() * d;
                let b = rng.gen::<f64>() * d;
                TemporalInterval::new(a.min(b), a.max(b)).unwrap()
            };
            EvalRecord {
                id: format!("r{i}"),
                duration_s: d,
                task: TaskKind::Videoqa,
                pred_interval: Some(draw(&mut rng)),
                gt_interval: Some(draw(&mut rng)),
                pred_answer: Some(letters[rng.gen_range(0..4)].to_string()),
                gt_answer: Some(letters[rng.gen_range(0..4)].to_string()),
                clip_count: 1,
            }
        })
        .collect();

    // Brute force: sweep-free interval overlap plus naive counting.
    let mut iou_sum = 0.0;
    let mut hits_07 = 0usize;
    let mut acc_sum = 0.0;
    for r in &records {
        let (p, g) = (r.pred_interval.unwrap(), r.gt_interval.unwrap());
        let lo = p.start_s().max(g.start_s());
        let hi = p.end_s().min(g.end_s());
        let inter = if hi > lo { hi - lo } else { 0.0 };
        let union = (p.end_s() - p.start_s()) + (g.end_s() - g.start_s()) - inter;
        let iou = if union > 0.0 { inter / union } else { 0.0 };
        iou_sum += iou;
        if iou >= 0.7 {
            hits_07 += 1;
        }
        if r.pred_answer == r.gt_answer {
            acc_sum += 1.0;
        }
    }
    let n = records.len() as f64;
    assert!((miou(&records).unwrap() - iou_sum / n).abs() < 1e-12);
    assert!((recall_at_iou(&records, 0.7).unwrap() - hits_07 as f64 / n).abs() < 1e-12);
    assert!((accuracy(&records).unwrap() - acc_sum / n).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn iou_is_symmetric_bounded_and_shift_invariant(
        a in arb_interval(5000.0),
        b in arb_interval(5000.0),
        shift in 0.0f64..1000.0,
    ) {
        let ab = temporal_iou(a, b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, temporal_iou(b, a));

        let sa = TemporalInterval::new(a.start_s() + shift, a.end_s() + shift).unwrap();
        let sb = TemporalInterval::new(b.start_s() + shift, b.end_s() + shift).unwrap();
        prop_assert!((temporal_iou(sa, sb) - ab).abs() < 1e-9);
    }

    #[test]
    fn iou_is_one_only_for_equal_positive_intervals(a in arb_interval(5000.0)) {
        let self_iou = temporal_iou(a, a);
        if a.length_s() > 0.0 {
            prop_assert_eq!(self_iou, 1.0);
        } else {
            prop_assert_eq!(self_iou, 0.0);
        }
    }

    #[test]
    fn penalty_is_monotone_with_one_jump(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let cfg = RewardConfig::default();
        let (lo, hi) = (x.min(y), x.max(y));
        prop_assert!(penalty_aware_iou(lo, &cfg) <= penalty_aware_iou(hi, &cfg));
        // Off the threshold the map is locally the identity shifted by 0 or lambda.
        let gap = penalty_aware_iou(hi, &cfg) - penalty_aware_iou(lo, &cfg) - (hi - lo);
        prop_assert!(gap.abs() < 1e-12 || (gap - cfg.lambda_penalty).abs() < 1e-12);
    }

    #[test]
    fn advantages_normalize_and_ignore_shift_scale(
        rewards in prop::collection::vec(-50.0f64..50.0, 2..17),
        shift in -10.0f64..10.0,
        scale in 0.1f64..10.0,
    ) {
        let adv = group_advantages(&rewards).unwrap();
        if !adv.epsilon_used {
            let g = rewards.len() as f64;
            let mean: f64 = adv.per_trajectory.iter().sum::<f64>() / g;
            let var: f64 = adv.per_trajectory.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / g;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);

            let transformed: Vec<f64> = rewards.iter().map(|r| r * scale + shift).collect();
            let adv2 = group_advantages(&transformed).unwrap();
            for (x, y) in adv.per_trajectory.iter().zip(&adv2.per_trajectory) {
                prop_assert!((x - y).abs() < 1e-6, "shift/scale changed advantages: {x} vs {y}");
            }
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_equality(
        cur in -30.0f64..0.0,
        delta in -25.0f64..25.0,
    ) {
        let kl = kl_estimate(&[TokenLogProbPair {
            logp_current: cur,
            logp_reference: cur + delta,
        }])[0];
        prop_assert!(kl >= 0.0);
        if delta.abs() > 1e-9 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn objective_with_zero_beta_is_mean_advantage(
        advs in prop::collection::vec((-3.0f64..3.0, 1usize..6), 1..5),
    ) {
        let adv_tokens: Vec<Vec<f64>> = advs.iter().map(|(a, n)| vec![*a; *n]).collect();
        let kl_tokens: Vec<Vec<f64>> = advs.iter().map(|(_, n)| vec![7.7; *n]).collect();
        let t = objective_terms(&adv_tokens, &kl_tokens, 0.0).unwrap();
        let total: f64 = adv_tokens.iter().flatten().sum();
        let count: usize = adv_tokens.iter().map(Vec::len).sum();
        prop_assert!((t.scalar - total / count as f64).abs() < 1e-12);
    }

    #[test]
    fn masking_supervises_exactly_the_final_two(
        turns in 1usize..6,
        lens in prop::collection::vec(1usize..30, 12),
    ) {
        let mut spans = Vec::new();
        let mut cursor = 0usize;
        let mut li = 0usize;
        let next_len = |li: &mut usize| {
            let l = lens[*li % lens.len()];
            *li += 1;
            l
        };
        for _ in 0..turns {
            for role in [Role::User, Role::Assistant, Role::Tool] {
                let len = next_len(&mut li);
                spans.push(MessageSpan { role, start: cursor, len, turn_index: None });
                cursor += len;
            }
        }
        let mask = unified_mask(&spans).unwrap();
        let supervised_assistant = spans
            .iter()
            .zip(&mask.0)
            .filter(|(s, &f)| f && s.role == Role::Assistant)
            .count();
        let supervised_other = spans
            .iter()
            .zip(&mask.0)
            .filter(|(s, &f)| f && s.role != Role::Assistant)
            .count();
        prop_assert_eq!(supervised_assistant, turns.min(2));
        prop_assert_eq!(supervised_other, 0);

        let (sup, masked) = masked_token_count(&mask, &spans).unwrap();
        let total: usize = spans.iter().map(|s| s.len).sum();
        prop_assert_eq!(sup + masked, total);
    }

    #[test]
    fn frame_budgets_are_never_exceeded(
        duration in 1.0f64..7200.0,
        clip in arb_interval(7900.0),
    ) {
        let cfg = SamplingConfig::default();
        let video = VideoMeta::new("v", duration, None).unwrap();

        let skim = skim_plan(&video, &cfg);
        prop_assert!(skim.frame_timestamps.len() <= cfg.skim_max_frames);
        prop_assert!(
            (skim.frame_timestamps.len() as f64) <= cfg.fps_cap * duration + 1.0
        );

        if let Ok(obs) = crop_plan(&video, clip, &cfg) {
            let len = obs.interval_applied.length_s();
            prop_assert!(obs.frame_timestamps.len() <= cfg.clip_max_frames);
            prop_assert!((obs.frame_timestamps.len() as f64) <= cfg.fps_cap * len + 1.0);
            prop_assert!(obs.frame_timestamps.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(obs
                .frame_timestamps
                .iter()
                .all(|&ts| obs.interval_applied.contains(ts)));

            // Densification where it applies.
            if cfg.densification_applies(&video, len) && len > 0.0 {
                let crop_density = effective_density(&obs).unwrap();
                let skim_density = effective_density(&skim).unwrap();
                prop_assert!(
                    crop_density >= skim_density,
                    "crop {crop_density} < skim {skim_density} (duration {duration}, len {len})"
                );
            }
        }
    }

    #[test]
    fn recall_is_monotone_non_increasing_in_threshold(
        ious in prop::collection::vec(0.0f64..=1.0, 1..40),
        t1 in 0.01f64..=1.0,
        t2 in 0.01f64..=1.0,
    ) {
        use clipgrounder_core::evalkit::{recall_at_iou, EvalRecord};
        use clipgrounder_core::types::TaskKind;
        let records: Vec<EvalRecord> = ious
            .iter()
            .enumerate()
            .map(|(i, &iou)| EvalRecord {
                id: format!("r{i}"),
                duration_s: 100.0,
                task: TaskKind::Grounding,
                // pred [0, iou] vs gt [0, 1] has IoU exactly iou.
                pred_interval: Some(TemporalInterval::new(0.0, iou).unwrap()),
                gt_interval: Some(TemporalInterval::new(0.0, 1.0).unwrap()),
                pred_answer: None,
                gt_answer: None,
                clip_count: 0,
            })
            .collect();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        prop_assert!(recall_at_iou(&records, lo)? >= recall_at_iou(&records, hi)?);
    }

    #[test]
    fn timestamps_are_deterministic(a in 0.0f64..7200.0, b in 0.0f64..7200.0) {
        let span = TemporalInterval::new(a.min(b), a.max(b)).unwrap();
        let x = uniform_timestamps(span, 2.0, 64);
        let y = uniform_timestamps(span, 2.0, 64);
        prop_assert_eq!(x, y);
    }
}
