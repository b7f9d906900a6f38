//! The curation state machine for multi-turn tool-call training data, plus
//! the single-turn filters (rejection sampling, relabel retention) and
//! stratified balancing.
//!
//! Annotators are pluggable external calls; a deterministic table-driven mock
//! ships for desk-scale verification.

mod annotator;

pub use annotator::{
    Annotator, AnnotatorError, AttemptLog, CurationContext, HttpAnnotator, MockAnnotator,
    MockEntry, MockTable,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cliptool::{crop_plan, SamplingConfig};
use crate::evalkit::{bucket_of, DurationBucket};
use crate::exec;
use crate::protocol::{parse_interval_literal, render_assistant_parts};
use crate::rewards::{accuracy_reward, temporal_iou, Matcher};
use crate::types::{
    Action, AssistantTurn, Question, Step, TaskKind, TemporalInterval, Termination, Trajectory,
    VideoMeta,
};

/// Sample modality, one of the three balancing axes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Video,
    Image,
}

/// One uncurated input sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub id: String,
    pub video: VideoMeta,
    pub question: String,
    pub task: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_answer: Option<String>,
    /// The original human interval annotation, when one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original_interval: Option<TemporalInterval>,
    #[serde(default)]
    pub modality: Modality,
}

impl RawSample {
    /// The ground truth this sample's task requires must be present.
    pub fn validate(&self) -> Result<(), CurateError> {
        match self.task {
            TaskKind::Videoqa if self.gt_answer.is_none() => {
                Err(CurateError::InvalidSample("videoqa sample lacks gt_answer"))
            }
            TaskKind::Grounding if self.original_interval.is_none() => Err(
                CurateError::InvalidSample("grounding sample lacks its interval annotation"),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("invalid sample: {0}")]
    InvalidSample(&'static str),
    /// Transport-level failure; the sample is deferred, not discarded.
    #[error(transparent)]
    Annotator(#[from] AnnotatorError),
    #[error("record has no assembled trajectory (outcome {0:?})")]
    NotAssemblable(CurationOutcome),
    #[error("trajectory assembly failed: {0}")]
    Assembly(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationOutcome {
    SingleTool,
    MultiTool,
    Discarded,
}

/// What happened to one sample in the curation state machine.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationRecord {
    /// Candidate intervals in the order tried (one, or two after a retry).
    pub candidates: Vec<TemporalInterval>,
    pub step1_pass: bool,
    pub step2_pass: bool,
    pub retry_used: bool,
    pub outcome: CurationOutcome,
    /// The step-2 verified answer text (videoqa), used when assembling.
    pub verified_answer: Option<String>,
    pub think: Option<String>,
}

impl CurationRecord {
    /// The candidate the final verdict was reached on.
    pub fn candidate_interval(&self) -> TemporalInterval {
        *self.candidates.last().expect("at least one candidate")
    }
}

/// Curation knobs: the sampling budgets used when cropping candidate
/// segments, the strict duration gate for retries, and the match predicates.
#[derive(Debug, Clone)]
pub struct CurateConfig {
    pub sampling: SamplingConfig,
    /// Retries apply only to videos strictly longer than this.
    pub long_video_gate_s: f64,
    pub matcher: Matcher,
    /// Grounding-task step answers must reach strictly more than this IoU
    /// against the annotation.
    pub grounding_match_min_iou: f64,
}

impl Default for CurateConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            long_video_gate_s: 180.0,
            matcher: Matcher::McNormalized,
            grounding_match_min_iou: 0.5,
        }
    }
}

/// Keep a relabeled grounding annotation only when it agrees with the
/// original strictly above 0.5 IoU.
pub fn relabel_filter(original: TemporalInterval, relabeled: TemporalInterval) -> bool {
    temporal_iou(original, relabeled) > 0.5
}

/// Single-turn QA rejection sampling: keep the sample only when the
/// annotator's full-context answer matches the ground truth.
pub fn rejection_sample_qa(
    sample: &RawSample,
    annotator: &dyn Annotator,
) -> Result<bool, CurateError> {
    let gt = sample
        .gt_answer
        .as_deref()
        .ok_or(CurateError::InvalidSample("rejection sampling needs gt_answer"))?;
    let ctx = CurationContext {
        candidate: sample.video.full_span(),
        attempts: Vec::new(),
    };
    let answer = annotator.answer_full_context(sample, &ctx)?;
    Ok(accuracy_reward(&answer, gt, Matcher::McNormalized) == 1.0)
}

/// Does an annotator answer match this sample's ground truth? QA compares
/// answer text under the matcher; grounding parses the interval syntax and
/// requires strictly more than the configured IoU.
fn answer_matches(sample: &RawSample, answer: &str, cfg: &CurateConfig) -> bool {
    match sample.task {
        TaskKind::Videoqa => {
            let gt = sample.gt_answer.as_deref().unwrap_or_default();
            accuracy_reward(answer, gt, cfg.matcher) == 1.0
        }
        TaskKind::Grounding => {
            let Some(gt) = sample.original_interval else {
                return false;
            };
            match parse_interval_literal(answer)
                .and_then(|(a, b)| TemporalInterval::new(a, b).ok())
            {
                Some(iv) => temporal_iou(iv, gt) > cfg.grounding_match_min_iou,
                None => false,
            }
        }
    }
}

struct StepsVerdict {
    step1_pass: bool,
    step2_pass: bool,
    verified_answer: Option<String>,
    log: AttemptLog,
}

fn run_steps(
    sample: &RawSample,
    annotator: &dyn Annotator,
    candidate: TemporalInterval,
    prior: &[AttemptLog],
    cfg: &CurateConfig,
) -> Result<StepsVerdict, CurateError> {
    // Step 1: answer solely from the cropped segment.
    let clip = match crop_plan(&sample.video, candidate, &cfg.sampling) {
        Ok(obs) => obs,
        Err(_) => {
            // An unusable candidate cannot pass the segment check.
            return Ok(StepsVerdict {
                step1_pass: false,
                step2_pass: false,
                verified_answer: None,
                log: AttemptLog {
                    candidate,
                    step1_answer: None,
                    step1_pass: false,
                    step2_answer: None,
                    step2_pass: None,
                },
            });
        }
    };
    let a1 = annotator.answer_from_clip(sample, &clip)?;
    let step1_pass = answer_matches(sample, &a1, cfg);
    if !step1_pass {
        return Ok(StepsVerdict {
            step1_pass: false,
            step2_pass: false,
            verified_answer: None,
            log: AttemptLog {
                candidate,
                step1_answer: Some(a1),
                step1_pass: false,
                step2_answer: None,
                step2_pass: None,
            },
        });
    }
    // Step 2: closed-loop consistency over the full context, including the
    // transcript of any prior failed attempt.
    let ctx = CurationContext {
        candidate,
        attempts: prior.to_vec(),
    };
    let a2 = annotator.answer_full_context(sample, &ctx)?;
    let step2_pass = answer_matches(sample, &a2, cfg);
    Ok(StepsVerdict {
        step1_pass: true,
        step2_pass,
        verified_answer: step2_pass.then(|| a2.clone()),
        log: AttemptLog {
            candidate,
            step1_answer: Some(a1),
            step1_pass: true,
            step2_answer: Some(a2),
            step2_pass: Some(step2_pass),
        },
    })
}

/// Runs the two-step verification state machine: ground, verify from the
/// segment, verify in full context; on a first failure, long videos
/// (strictly over the gate) earn exactly one reground-and-rerun round.
pub fn curate(
    sample: &RawSample,
    annotator: &dyn Annotator,
    cfg: &CurateConfig,
) -> Result<CurationRecord, CurateError> {
    sample.validate()?;
    let think = annotator.reasoning(sample);
    let candidate = annotator.ground(sample)?;
    let first = run_steps(sample, annotator, candidate, &[], cfg)?;
    if first.step1_pass && first.step2_pass {
        return Ok(CurationRecord {
            candidates: vec![candidate],
            step1_pass: true,
            step2_pass: true,
            retry_used: false,
            outcome: CurationOutcome::SingleTool,
            verified_answer: first.verified_answer,
            think,
        });
    }
    if sample.video.duration_s() <= cfg.long_video_gate_s {
        return Ok(CurationRecord {
            candidates: vec![candidate],
            step1_pass: first.step1_pass,
            step2_pass: first.step2_pass,
            retry_used: false,
            outcome: CurationOutcome::Discarded,
            verified_answer: None,
            think,
        });
    }
    let failure_ctx = CurationContext {
        candidate,
        attempts: vec![first.log.clone()],
    };
    let candidate2 = annotator.reground(sample, &failure_ctx)?;
    let second = run_steps(sample, annotator, candidate2, &[first.log], cfg)?;
    let outcome = if second.step1_pass && second.step2_pass {
        CurationOutcome::MultiTool
    } else {
        CurationOutcome::Discarded
    };
    Ok(CurationRecord {
        candidates: vec![candidate, candidate2],
        step1_pass: second.step1_pass,
        step2_pass: second.step2_pass,
        retry_used: true,
        outcome,
        verified_answer: second.verified_answer,
        think,
    })
}

/// Builds the SFT-format trajectory for a retained record: one clip turn per
/// candidate, then the verified answer.
pub fn assemble_trajectory(
    record: &CurationRecord,
    sample: &RawSample,
    cfg: &CurateConfig,
) -> Result<Trajectory, CurateError> {
    if record.outcome == CurationOutcome::Discarded {
        return Err(CurateError::NotAssemblable(record.outcome));
    }
    let clip_thinks = [
        "Locating the segment relevant to the question.",
        "The first segment failed verification; refining it.",
    ];
    let mut steps = Vec::with_capacity(record.candidates.len() + 1);
    for (i, candidate) in record.candidates.iter().enumerate() {
        let action = Action::Clip { interval: *candidate };
        let raw = render_assistant_parts(clip_thinks[i.min(1)], &action)
            .map_err(|e| CurateError::Assembly(e.to_string()))?;
        let obs = crop_plan(&sample.video, *candidate, &cfg.sampling)
            .map_err(|e| CurateError::Assembly(e.to_string()))?;
        steps.push(Step::parsed(
            AssistantTurn {
                think: clip_thinks[i.min(1)].to_string(),
                action,
                raw_text: raw,
            },
            Some(obs),
        ));
    }
    let answer_think = record
        .think
        .clone()
        .unwrap_or_else(|| "Answering from the verified segment.".to_string());
    let action = match sample.task {
        TaskKind::Videoqa => Action::AnswerText {
            text: record
                .verified_answer
                .clone()
                .or_else(|| sample.gt_answer.clone())
                .ok_or(CurateError::InvalidSample("no answer to assemble"))?,
        },
        TaskKind::Grounding => Action::AnswerInterval {
            interval: record.candidate_interval(),
        },
    };
    let raw = render_assistant_parts(&answer_think, &action)
        .map_err(|e| CurateError::Assembly(e.to_string()))?;
    steps.push(Step::parsed(
        AssistantTurn {
            think: answer_think,
            action,
            raw_text: raw,
        },
        None,
    ));
    let question = Question {
        text: sample.question.clone(),
        task: sample.task,
        choices: None,
        gt_answer: sample.gt_answer.clone(),
        gt_interval: sample.original_interval,
    };
    Ok(Trajectory {
        video: sample.video.clone(),
        question,
        steps,
        terminated_by: Termination::Answer,
        group_id: None,
    })
}

/// One cell of the three-axis balance grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stratum {
    pub bucket: DurationBucket,
    pub task: TaskKind,
    pub modality: Modality,
}

impl Stratum {
    pub fn of(sample: &RawSample) -> Self {
        Self {
            bucket: bucket_of(sample.video.duration_s()),
            task: sample.task,
            modality: sample.modality,
        }
    }
}

/// The balanced subset (input indices, ascending) and any strata that could
/// not fill their quota.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOutcome {
    pub selected: Vec<usize>,
    pub shortfalls: Vec<(Stratum, usize)>,
}

/// Draws `min(quota, available)` samples per stratum by a seeded uniform draw
/// without replacement. Deterministic under the seed; strata without a quota
/// contribute nothing.
pub fn stratified_balance(
    samples: &[RawSample],
    quotas: &BTreeMap<Stratum, usize>,
    seed: u64,
) -> BalanceOutcome {
    let mut by_stratum: BTreeMap<Stratum, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_stratum.entry(Stratum::of(s)).or_default().push(i);
    }
    let mut selected = Vec::new();
    let mut shortfalls = Vec::new();
    for (ordinal, (stratum, &quota)) in quotas.iter().enumerate() {
        let mut pool = by_stratum.get(stratum).cloned().unwrap_or_default();
        let mut rng = ChaCha8Rng::seed_from_u64(exec::derive_seed(seed, ordinal as u64));
        pool.shuffle(&mut rng);
        let take = quota.min(pool.len());
        selected.extend(pool.into_iter().take(take));
        if take < quota {
            shortfalls.push((*stratum, quota - take));
        }
    }
    selected.sort_unstable();
    BalanceOutcome {
        selected,
        shortfalls,
    }
}
