//! Scripted policies over the synthetic environment.
//!
//! Each one isolates a behavior the harness needs to measure: perfect
//! localization, direct answering, blind reward farming, refinement, and
//! duration-scaled grounding error.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::protocol::render_assistant_parts;
use crate::rollout::{Policy, PolicyContext, PolicyError, SyntheticVideo, SyntheticWorld};
use crate::types::{Action, TaskKind, TemporalInterval};

fn lookup<'w>(
    world: &'w SyntheticWorld,
    ctx: &PolicyContext<'_>,
) -> Result<&'w SyntheticVideo, PolicyError> {
    world
        .get(ctx.video.id())
        .ok_or_else(|| PolicyError::UnknownInstance(ctx.video.id().to_string()))
}

fn render(think: &str, action: &Action) -> Result<String, PolicyError> {
    render_assistant_parts(think, action).map_err(|e| PolicyError::Other(e.to_string()))
}

fn clip_message(think: &str, interval: TemporalInterval) -> Result<String, PolicyError> {
    render(think, &Action::Clip { interval })
}

/// Answer from whatever the environment grants given the observations so far:
/// text for QA, the given interval for grounding tasks.
fn answer_message(
    instance: &SyntheticVideo,
    ctx: &PolicyContext<'_>,
    grounding_guess: TemporalInterval,
    think: &str,
) -> Result<String, PolicyError> {
    let action = match ctx.question.task {
        TaskKind::Videoqa => Action::AnswerText {
            text: instance.respond(ctx.steps).to_string(),
        },
        TaskKind::Grounding => Action::AnswerInterval {
            interval: grounding_guess,
        },
    };
    render(think, &action)
}

/// Shifts `evidence` by `offset` seconds, preferring right, falling back to
/// left, clamping into the video as a last resort.
fn shifted_within(
    evidence: TemporalInterval,
    offset: f64,
    duration: f64,
) -> TemporalInterval {
    if offset <= 0.0 {
        return evidence;
    }
    if evidence.end_s() + offset <= duration {
        TemporalInterval::new(evidence.start_s() + offset, evidence.end_s() + offset)
    } else if evidence.start_s() - offset >= 0.0 {
        TemporalInterval::new(evidence.start_s() - offset, evidence.end_s() - offset)
    } else {
        TemporalInterval::new(
            (evidence.start_s() + offset).min(duration),
            duration,
        )
    }
    .expect("shifted interval stays ordered")
}

/// Clips exactly the hidden evidence interval, then answers. Two turns,
/// grounding IoU 1, accuracy 1 on every instance.
pub struct OraclePolicy {
    world: Arc<SyntheticWorld>,
}

impl OraclePolicy {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        Self { world }
    }
}

impl Policy for OraclePolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let instance = lookup(&self.world, ctx)?;
        if ctx.turn_index() == 0 {
            clip_message("the question points at one segment; cropping it", instance.evidence)
        } else {
            answer_message(instance, ctx, instance.evidence, "the clip settles it")
        }
    }
}

/// Answers immediately from the skim, without any tool call.
pub struct DirectAnswerPolicy {
    world: Arc<SyntheticWorld>,
}

impl DirectAnswerPolicy {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        Self { world }
    }
}

impl Policy for DirectAnswerPolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let instance = lookup(&self.world, ctx)?;
        answer_message(
            instance,
            ctx,
            ctx.video.full_span(),
            "the skim looks sufficient; answering directly",
        )
    }
}

/// Clips one uniformly random interval, then answers. The reward-hacking
/// baseline: it farms raw IoU credit without looking.
pub struct BlindPolicy {
    world: Arc<SyntheticWorld>,
}

impl BlindPolicy {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        Self { world }
    }
}

impl Policy for BlindPolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let instance = lookup(&self.world, ctx)?;
        if ctx.turn_index() == 0 {
            let d = ctx.video.duration_s();
            let a = rng.gen::<f64>() * d;
            let b = rng.gen::<f64>() * d;
            let interval = TemporalInterval::new(a.min(b), a.max(b)).expect("ordered");
            clip_message("somewhere in there, probably", interval)
        } else {
            let guess = ctx
                .steps
                .iter()
                .find_map(|s| s.turn.action().and_then(Action::clip_interval))
                .unwrap_or_else(|| ctx.video.full_span());
            answer_message(instance, ctx, guess, "committing to the guess")
        }
    }
}

/// First clip lands off target by a fixed offset; the second corrects it.
/// Three turns whose second clip strictly improves on the first.
pub struct RefinePolicy {
    world: Arc<SyntheticWorld>,
    offset_s: f64,
}

impl RefinePolicy {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        Self {
            world,
            offset_s: 30.0,
        }
    }

    pub fn with_offset(world: Arc<SyntheticWorld>, offset_s: f64) -> Self {
        Self { world, offset_s }
    }
}

impl Policy for RefinePolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let instance = lookup(&self.world, ctx)?;
        match ctx.turn_index() {
            0 => clip_message(
                "first pass at the segment",
                shifted_within(instance.evidence, self.offset_s, ctx.video.duration_s()),
            ),
            1 => clip_message("that missed; correcting the bounds", instance.evidence),
            _ => answer_message(instance, ctx, instance.evidence, "the refined clip settles it"),
        }
    }
}

/// Grounding error grows super-linearly with duration: the clip is the
/// evidence shifted by `growth * duration^2 / 60` seconds, so per-instance
/// IoU decreases strictly as videos get longer.
pub struct NoisyPolicy {
    world: Arc<SyntheticWorld>,
    growth: f64,
}

impl NoisyPolicy {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        Self {
            world,
            growth: 0.001,
        }
    }

    pub fn with_growth(world: Arc<SyntheticWorld>, growth: f64) -> Self {
        Self { world, growth }
    }

    pub fn shift_for(&self, duration_s: f64) -> f64 {
        self.growth * duration_s * duration_s / 60.0
    }
}

impl Policy for NoisyPolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let instance = lookup(&self.world, ctx)?;
        let d = ctx.video.duration_s();
        let noisy = shifted_within(instance.evidence, self.shift_for(d), d);
        if ctx.turn_index() == 0 {
            clip_message("roughly around here", noisy)
        } else {
            answer_message(instance, ctx, noisy, "answering from the rough clip")
        }
    }
}

/// Answers directly when the video is shorter than the threshold, clips the
/// evidence first otherwise. The on-demand tool-call pattern.
pub struct LengthAwarePolicy {
    world: Arc<SyntheticWorld>,
    threshold_s: f64,
}

impl LengthAwarePolicy {
    pub fn new(world: Arc<SyntheticWorld>) -> Self {
        Self {
            world,
            threshold_s: 180.0,
        }
    }

    pub fn with_threshold(world: Arc<SyntheticWorld>, threshold_s: f64) -> Self {
        Self { world, threshold_s }
    }
}

impl Policy for LengthAwarePolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let instance = lookup(&self.world, ctx)?;
        if ctx.video.duration_s() < self.threshold_s {
            answer_message(
                instance,
                ctx,
                instance.evidence,
                "short video; answering from the skim",
            )
        } else if ctx.turn_index() == 0 {
            clip_message("long video; cropping the relevant part", instance.evidence)
        } else {
            answer_message(instance, ctx, instance.evidence, "answering from the clip")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::temporal_iou;
    use crate::rollout::{run_rollout, RolloutConfig};

    fn iv(a: f64, b: f64) -> TemporalInterval {
        TemporalInterval::new(a, b).unwrap()
    }

    #[test]
    fn shifted_within_prefers_right_then_left() {
        assert_eq!(shifted_within(iv(10.0, 20.0), 30.0, 600.0), iv(40.0, 50.0));
        assert_eq!(shifted_within(iv(580.0, 595.0), 30.0, 600.0), iv(550.0, 565.0));
        // No room either way: clamp against the end.
        let got = shifted_within(iv(0.0, 595.0), 30.0, 600.0);
        assert_eq!(got, iv(30.0, 600.0));
    }

    #[test]
    fn noisy_iou_decreases_with_duration() {
        let mut last = f64::INFINITY;
        for duration in [90.0, 400.0, 900.0, 3000.0] {
            let evidence_len = duration * 0.1;
            let start = duration * 0.4;
            let video = SyntheticVideo::build(
                "n",
                duration,
                iv(start, start + evidence_len),
                "B",
                "C",
                0.5,
            );
            let world = Arc::new(SyntheticWorld::new(vec![video]));
            let policy = NoisyPolicy::new(Arc::clone(&world));
            let instance = world.instances().next().unwrap();
            let t = run_rollout(
                &policy,
                &instance.meta,
                &instance.question(),
                &RolloutConfig::default(),
                3,
            )
            .unwrap();
            let iou = temporal_iou(t.clip_intervals()[0], instance.evidence);
            assert!(iou < last, "IoU must fall with duration: {iou} !< {last}");
            last = iou;
        }
    }

    #[test]
    fn length_aware_clips_only_long_videos() {
        for (duration, expect_clip) in [(120.0, false), (179.9, false), (180.0, true), (900.0, true)]
        {
            let video =
                SyntheticVideo::build("l", duration, iv(duration * 0.2, duration * 0.3), "B", "C", 0.5);
            let world = Arc::new(SyntheticWorld::new(vec![video]));
            let policy = LengthAwarePolicy::new(Arc::clone(&world));
            let instance = world.instances().next().unwrap();
            let t = run_rollout(
                &policy,
                &instance.meta,
                &instance.question(),
                &RolloutConfig::default(),
                3,
            )
            .unwrap();
            assert_eq!(!t.clip_intervals().is_empty(), expect_clip, "at {duration}s");
        }
    }
}
