//! Trajectory rewards: answer accuracy, format adherence, and the
//! penalty-aware IoU reward, combined as a weighted sum.
//!
//! The IoU term is what discourages blind clipping: below the threshold
//! `sigma` the raw IoU is docked by `lambda`, so arbitrary guesses carry
//! negative expected grounding credit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol;
use crate::types::{final_action, Action, TaskKind, TemporalInterval, Trajectory};

/// How predicted answers are compared to ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Exact,
    McNormalized,
}

/// Reward hyper-parameters. Config files use the keys
/// `lambda`, `sigma`, `weights`, `matcher`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    #[serde(rename = "lambda")]
    pub lambda_penalty: f64,
    #[serde(rename = "sigma")]
    pub sigma_threshold: f64,
    /// `(w_acc, w_fmt, w_iou)`.
    pub weights: [f64; 3],
    pub matcher: Matcher,
    /// Score the best-IoU clip instead of the last clip before the answer
    /// (videoqa with an annotated evidence interval).
    #[serde(default)]
    pub best_clip_iou: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lambda_penalty: 0.1,
            sigma_threshold: 0.1,
            weights: [1.0, 1.0, 1.0],
            matcher: Matcher::McNormalized,
            best_clip_iou: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.lambda_penalty < 0.0 {
            return Err(RewardError::BadConfig("lambda must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.sigma_threshold) {
            return Err(RewardError::BadConfig("sigma must lie in [0, 1]"));
        }
        if self.weights.iter().any(|w| *w < 0.0) {
            return Err(RewardError::BadConfig("weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("missing ground truth: {0}")]
    MissingGroundTruth(&'static str),
    #[error("invalid reward config: {0}")]
    BadConfig(&'static str),
}

/// Per-trajectory reward components and their combined scalar.
///
/// `accuracy` is absent for grounding tasks; the IoU pair is absent when the
/// trajectory carries no scorable grounding prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: Option<f64>,
    pub format: f64,
    pub iou_raw: Option<f64>,
    pub iou_penalized: Option<f64>,
    pub total: f64,
}

/// Eq-style exact-match accuracy: 1 only if the matcher deems the strings equal.
pub fn accuracy_reward(pred: &str, gt: &str, matcher: Matcher) -> f64 {
    let hit = match matcher {
        Matcher::Exact => pred == gt,
        Matcher::McNormalized => normalize_mc(pred) == normalize_mc(gt),
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Trim, strip surrounding punctuation, and case-fold so option letters
/// compare: " b. " matches "B".
fn normalize_mc(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_uppercase()
}

/// Interval intersection-over-union, with the union measured as
/// `|a| + |b| - |a ∩ b|`. A zero-measure union scores 0.
pub fn temporal_iou(a: TemporalInterval, b: TemporalInterval) -> f64 {
    let inter = (a.end_s().min(b.end_s()) - a.start_s().max(b.start_s())).max(0.0);
    let union = a.length_s() + b.length_s() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Applies the low-IoU penalty: `iou - lambda` below the threshold, `iou`
/// at or above it (the boundary takes the no-penalty branch).
pub fn penalty_aware_iou(iou: f64, cfg: &RewardConfig) -> f64 {
    if iou < cfg.sigma_threshold {
        iou - cfg.lambda_penalty
    } else {
        iou
    }
}

/// The grounding prediction a trajectory is scored on, if any.
///
/// Grounding tasks are scored on the final interval answer; a missing or
/// unusable final interval scores IoU 0. VideoQA tasks with an annotated
/// evidence interval are scored on the last clip before the answer (or the
/// best clip when configured); a videoqa trajectory that never clipped has
/// no grounding prediction and the IoU term is dropped.
fn scored_iou(t: &Trajectory, gt: TemporalInterval, cfg: &RewardConfig) -> Option<f64> {
    match t.question.task {
        TaskKind::Grounding => match final_action(t) {
            Some(Action::AnswerInterval { interval }) => Some(temporal_iou(*interval, gt)),
            _ => Some(0.0),
        },
        TaskKind::Videoqa => {
            let clips = t.clip_intervals();
            if clips.is_empty() {
                None
            } else if cfg.best_clip_iou {
                clips
                    .iter()
                    .map(|c| temporal_iou(*c, gt))
                    .max_by(|a, b| a.total_cmp(b))
            } else {
                Some(temporal_iou(*clips.last().unwrap(), gt))
            }
        }
    }
}

/// Scores one complete trajectory under the configured weights.
pub fn score_trajectory(t: &Trajectory, cfg: &RewardConfig) -> Result<RewardBreakdown, RewardError> {
    cfg.validate()?;
    let format = if protocol::format_valid(t) { 1.0 } else { 0.0 };

    let (accuracy, iou_raw) = match t.question.task {
        TaskKind::Videoqa => {
            let gt_answer = t
                .question
                .gt_answer
                .as_deref()
                .ok_or(RewardError::MissingGroundTruth("videoqa needs gt_answer"))?;
            let acc = match final_action(t) {
                Some(Action::AnswerText { text }) => accuracy_reward(text, gt_answer, cfg.matcher),
                _ => 0.0,
            };
            let iou = t
                .question
                .gt_interval
                .and_then(|gt| scored_iou(t, gt, cfg));
            (Some(acc), iou)
        }
        TaskKind::Grounding => {
            let gt = t
                .question
                .gt_interval
                .ok_or(RewardError::MissingGroundTruth("grounding needs gt_interval"))?;
            (None, scored_iou(t, gt, cfg))
        }
    };

    let iou_penalized = iou_raw.map(|x| penalty_aware_iou(x, cfg));
    let [w_acc, w_fmt, w_iou] = cfg.weights;
    let total = accuracy.map_or(0.0, |a| w_acc * a)
        + w_fmt * format
        + iou_penalized.map_or(0.0, |p| w_iou * p);
    Ok(RewardBreakdown {
        accuracy,
        format,
        iou_raw,
        iou_penalized,
        total,
    })
}

/// Scores a batch of trajectories, in parallel when the `parallel` feature is
/// enabled.
pub fn score_batch(
    trajectories: &[Trajectory],
    cfg: &RewardConfig,
) -> Vec<Result<RewardBreakdown, RewardError>> {
    crate::exec::map_batch(trajectories, |t| score_trajectory(t, cfg))
}

/// Sequential twin of [`score_batch`], kept callable for benchmarking.
pub fn score_batch_seq(
    trajectories: &[Trajectory],
    cfg: &RewardConfig,
) -> Vec<Result<RewardBreakdown, RewardError>> {
    crate::exec::map_batch_seq(trajectories, |t| score_trajectory(t, cfg))
}
