//! Cross-module properties on randomized rollouts: everything the engine
//! produces validates, serializes round-trip, and respects the turn budget.

use clipgrounder_core::jsonl::{decode_trajectory, encode_trajectory, SchemaMode};
use clipgrounder_core::protocol::render_assistant_parts;
use clipgrounder_core::rollout::{
    run_rollout, ParseFailurePolicy, Policy, PolicyContext, PolicyError, RolloutConfig,
};
use clipgrounder_core::types::{
    validate_trajectory, Action, Question, TaskKind, TemporalInterval, ValidationLimits, VideoMeta,
};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Emits a random mix of clips (sometimes out of range), both answer kinds,
/// and outright garbage, exercising every engine path.
struct ChaosPolicy;

impl Policy for ChaosPolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let d = ctx.video.duration_s();
        let roll: f64 = rng.gen();
        let message = if roll < 0.45 {
            let a = rng.gen::<f64>() * d * 1.2;
            let b = rng.gen::<f64>() * d * 1.2;
            render_assistant_parts(
                "chaos clip",
                &Action::Clip {
                    interval: TemporalInterval::new(a.min(b), a.max(b)).unwrap(),
                },
            )
            .unwrap()
        } else if roll < 0.6 {
            render_assistant_parts(
                "chaos text",
                &Action::AnswerText {
                    text: format!("option {}", rng.gen_range(0..4)),
                },
            )
            .unwrap()
        } else if roll < 0.75 {
            let a = rng.gen::<f64>() * d;
            let b = rng.gen::<f64>() * d;
            render_assistant_parts(
                "chaos interval",
                &Action::AnswerInterval {
                    interval: TemporalInterval::new(a.min(b), a.max(b)).unwrap(),
                },
            )
            .unwrap()
        } else if roll < 0.85 {
            "<think>unclosed".to_string()
        } else if roll < 0.95 {
            format!("<answer>{}</answer>", rng.gen_range(0..9))
        } else {
            "random junk with no tags".to_string()
        };
        Ok(message)
    }
}

fn question_for(task: TaskKind) -> Question {
    match task {
        TaskKind::Videoqa => Question {
            gt_answer: Some("B".into()),
            gt_interval: Some(TemporalInterval::new(1.0, 2.0).unwrap()),
            ..Question::videoqa("q")
        },
        TaskKind::Grounding => Question {
            gt_interval: Some(TemporalInterval::new(1.0, 2.0).unwrap()),
            ..Question::grounding("q")
        },
    }
}

/// Two routes to the blind policy's expected clip IoU: full rollouts through
/// the engine vs a brute-force simulation of uniform random intervals.
#[test]
fn blind_policy_iou_matches_brute_force_expectation() {
    use clipgrounder_core::rewards::temporal_iou;
    use clipgrounder_core::rollout::{BlindPolicy, SyntheticVideo, SyntheticWorld};
    use rand_chacha::rand_core::SeedableRng;
    use std::sync::Arc;

    let duration = 1000.0;
    let evidence = TemporalInterval::new(450.0, 550.0).unwrap();
    let instance = SyntheticVideo::build("mc", duration, evidence, "B", "C", 0.5);
    let world = Arc::new(SyntheticWorld::new(vec![instance.clone()]));
    let policy = BlindPolicy::new(world);
    let cfg = RolloutConfig::default();

    let n_rollouts = 4000usize;
    let mut rollout_ious = Vec::with_capacity(n_rollouts);
    for seed in 0..n_rollouts as u64 {
        let t = run_rollout(&policy, &instance.meta, &instance.question(), &cfg, seed).unwrap();
        rollout_ious.push(temporal_iou(t.clip_intervals()[0], evidence));
    }

    // Brute force: the same uniform-interval family, no engine involved.
    let n_direct = 200_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(987);
    let mut direct_ious = Vec::with_capacity(n_direct);
    for _ in 0..n_direct {
        let a = rng.gen::<f64>() * duration;
        let b = rng.gen::<f64>() * duration;
        let clip = TemporalInterval::new(a.min(b), a.max(b)).unwrap();
        direct_ious.push(temporal_iou(clip, evidence));
    }

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    let m_roll = mean(&rollout_ious);
    let m_direct = mean(&direct_ious);
    let band = 3.0
        * (var(&rollout_ious, m_roll) / n_rollouts as f64
            + var(&direct_ious, m_direct) / n_direct as f64)
            .sqrt();
    assert!(
        (m_roll - m_direct).abs() <= band,
        "rollout mean {m_roll} vs brute force {m_direct} (band {band})"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn engine_output_always_validates_and_round_trips(
        seed in any::<u64>(),
        duration in 1.0f64..7200.0,
        t_max in 1usize..6,
        terminate in any::<bool>(),
        grounding in any::<bool>(),
    ) {
        let cfg = RolloutConfig {
            t_max,
            on_parse_failure: if terminate {
                ParseFailurePolicy::Terminate
            } else {
                ParseFailurePolicy::ErrorObservationAndContinue
            },
            ..RolloutConfig::default()
        };
        let video = VideoMeta::new("chaos", duration, None).unwrap();
        let task = if grounding { TaskKind::Grounding } else { TaskKind::Videoqa };
        let t = run_rollout(&ChaosPolicy, &video, &question_for(task), &cfg, seed).unwrap();

        // Engine output satisfies every trajectory invariant.
        let limits = ValidationLimits { t_max, clip_max_frames: cfg.sampling.clip_max_frames };
        prop_assert_eq!(validate_trajectory(&t, &limits), vec![]);
        prop_assert!(t.turn_count() <= t_max);

        // Termination is consistent with the final action.
        match t.terminated_by {
            clipgrounder_core::types::Termination::Answer => {
                prop_assert!(clipgrounder_core::types::final_action(&t).is_some())
            }
            clipgrounder_core::types::Termination::MaxTurns => {
                prop_assert_eq!(t.turn_count(), t_max)
            }
            clipgrounder_core::types::Termination::ProtocolError => prop_assert!(terminate),
        }

        // decode(encode(t)) is structural identity, strict mode included.
        let line = encode_trajectory(&t);
        let back = decode_trajectory(&line, SchemaMode::Strict).unwrap();
        prop_assert!(t.structurally_eq(&back));
        prop_assert_eq!(encode_trajectory(&back), line);

        // Identical seeds reproduce the trajectory exactly.
        let again = run_rollout(&ChaosPolicy, &video, &question_for(task), &cfg, seed).unwrap();
        prop_assert_eq!(t, again);
    }

    #[test]
    fn scoring_total_matches_component_sum(
        seed in any::<u64>(),
        duration in 30.0f64..3000.0,
    ) {
        use clipgrounder_core::rewards::{score_trajectory, RewardConfig};
        let cfg = RolloutConfig::default();
        let video = VideoMeta::new("chaos", duration, None).unwrap();
        let t = run_rollout(&ChaosPolicy, &video, &question_for(TaskKind::Videoqa), &cfg, seed)
            .unwrap();
        let b = score_trajectory(&t, &RewardConfig::default()).unwrap();
        let expected = b.accuracy.unwrap_or(0.0)
            + b.format
            + b.iou_penalized.unwrap_or(0.0);
        prop_assert!((b.total - expected).abs() < 1e-12);
        if let (Some(raw), Some(pen)) = (b.iou_raw, b.iou_penalized) {
            prop_assert!(pen <= raw + 1e-15);
            prop_assert!((raw - pen).abs() < 1e-15 || (raw - pen - 0.1).abs() < 1e-15);
        }
    }
}
