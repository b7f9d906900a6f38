//! Shared domain vocabulary: videos, questions, intervals, turns, trajectories.
//!
//! Everything here is an immutable value after construction and safe to share
//! across threads. Invariants are enforced at construction time; trajectory
//! level invariants are checked by [`validate_trajectory`], which reports
//! violations as data rather than failing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error raised when a domain value cannot be constructed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("reversed interval: start {start} > end {end}")]
    ReversedInterval { start: f64, end: f64 },
    #[error("negative interval bound: start {0}")]
    NegativeStart(f64),
    #[error("non-finite interval bound")]
    NonFiniteBound,
    #[error("video duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("think text contains a literal close tag")]
    ThinkContainsCloseTag,
}

/// A `[start, end]` span in seconds. The unit of grounding, cropping, and IoU.
///
/// Zero-length intervals (start == end) are representable; reversed ones are
/// rejected at construction. Serialized as a two-element JSON array `[s, e]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct TemporalInterval {
    start_s: f64,
    end_s: f64,
}

impl TemporalInterval {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self, DomainError> {
        if !start_s.is_finite() || !end_s.is_finite() {
            return Err(DomainError::NonFiniteBound);
        }
        if start_s < 0.0 {
            return Err(DomainError::NegativeStart(start_s));
        }
        if start_s > end_s {
            return Err(DomainError::ReversedInterval {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Self { start_s, end_s })
    }

    pub fn start_s(&self) -> f64 {
        self.start_s
    }

    pub fn end_s(&self) -> f64 {
        self.end_s
    }

    pub fn length_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s
    }
}

impl TryFrom<[f64; 2]> for TemporalInterval {
    type Error = DomainError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1])
    }
}

impl From<TemporalInterval> for [f64; 2] {
    fn from(iv: TemporalInterval) -> Self {
        [iv.start_s, iv.end_s]
    }
}

/// Metadata for one video; pixel data lives elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VideoMetaWire", into = "VideoMetaWire")]
pub struct VideoMeta {
    id: String,
    duration_s: f64,
    source_uri: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct VideoMetaWire {
    id: String,
    duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_uri: Option<String>,
}

impl VideoMeta {
    pub fn new(
        id: impl Into<String>,
        duration_s: f64,
        source_uri: Option<String>,
    ) -> Result<Self, DomainError> {
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(DomainError::NonPositiveDuration(duration_s));
        }
        Ok(Self {
            id: id.into(),
            duration_s,
            source_uri,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn source_uri(&self) -> Option<&str> {
        self.source_uri.as_deref()
    }

    /// The full `[0, duration]` span.
    pub fn full_span(&self) -> TemporalInterval {
        TemporalInterval::new(0.0, self.duration_s).expect("duration is positive")
    }
}

impl TryFrom<VideoMetaWire> for VideoMeta {
    type Error = DomainError;

    fn try_from(w: VideoMetaWire) -> Result<Self, Self::Error> {
        VideoMeta::new(w.id, w.duration_s, w.source_uri)
    }
}

impl From<VideoMeta> for VideoMetaWire {
    fn from(v: VideoMeta) -> Self {
        VideoMetaWire {
            id: v.id,
            duration_s: v.duration_s,
            source_uri: v.source_uri,
        }
    }
}

/// Which of the two unified tasks a question belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Videoqa,
    Grounding,
}

/// One labeled multiple-choice option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// A question posed over a video, with whatever ground truth its task carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub task: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_interval: Option<TemporalInterval>,
}

impl Question {
    pub fn videoqa(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            task: TaskKind::Videoqa,
            choices: None,
            gt_answer: None,
            gt_interval: None,
        }
    }

    pub fn grounding(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            task: TaskKind::Grounding,
            choices: None,
            gt_answer: None,
            gt_interval: None,
        }
    }
}

/// What an assistant turn does: request a clip or commit to a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Clip { interval: TemporalInterval },
    AnswerText { text: String },
    AnswerInterval { interval: TemporalInterval },
}

impl Action {
    pub fn is_clip(&self) -> bool {
        matches!(self, Action::Clip { .. })
    }

    pub fn is_answer(&self) -> bool {
        matches!(self, Action::AnswerText { .. } | Action::AnswerInterval { .. })
    }

    pub fn clip_interval(&self) -> Option<TemporalInterval> {
        match self {
            Action::Clip { interval } => Some(*interval),
            _ => None,
        }
    }
}

/// One parsed assistant message: reasoning text plus exactly one action.
///
/// `raw_text` is the exact serialized message the turn was parsed from; it
/// reparses to `(think, action)`. Structural comparison helpers ignore it.
#[derive(Debug, Clone, PartialEq)]
pub struct AssistantTurn {
    pub think: String,
    pub action: Action,
    pub raw_text: String,
}

impl AssistantTurn {
    /// Structural equality on (think, action), ignoring the raw serialization.
    pub fn structurally_eq(&self, other: &Self) -> bool {
        self.think == other.think && self.action == other.action
    }
}

/// Frame timestamps returned by the clip tool for one crop request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(rename = "interval")]
    pub interval_applied: TemporalInterval,
    #[serde(rename = "timestamps")]
    pub frame_timestamps: Vec<f64>,
}

/// The body of one assistant turn: parsed, or kept verbatim when parsing failed.
///
/// Malformed raw text is retained so the format reward stays computable on
/// protocol failures.
#[derive(Debug, Clone, PartialEq)]
pub enum TurnBody {
    Parsed(AssistantTurn),
    Malformed { raw_text: String, reason: String },
}

impl TurnBody {
    pub fn raw_text(&self) -> &str {
        match self {
            TurnBody::Parsed(t) => &t.raw_text,
            TurnBody::Malformed { raw_text, .. } => raw_text,
        }
    }

    pub fn action(&self) -> Option<&Action> {
        match self {
            TurnBody::Parsed(t) => Some(&t.action),
            TurnBody::Malformed { .. } => None,
        }
    }
}

/// One step of a trajectory: an assistant turn plus the clip observation it
/// earned, if any. `clip_error` records a well-formed clip request the
/// environment rejected (out of range), which earns an error note instead of
/// an observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub turn: TurnBody,
    pub observation: Option<Observation>,
    pub clip_error: Option<String>,
}

impl Step {
    pub fn parsed(turn: AssistantTurn, observation: Option<Observation>) -> Self {
        Self {
            turn: TurnBody::Parsed(turn),
            observation,
            clip_error: None,
        }
    }
}

/// How a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answer,
    MaxTurns,
    ProtocolError,
}

/// One multi-turn episode: a (video, question) pair plus alternating assistant
/// turns and clip observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub video: VideoMeta,
    pub question: Question,
    pub steps: Vec<Step>,
    pub terminated_by: Termination,
    /// Optional group tag linking rollout output to advantage computation.
    pub group_id: Option<String>,
}

impl Trajectory {
    /// Number of assistant turns, counting malformed ones (they consume turns).
    pub fn turn_count(&self) -> usize {
        self.steps.len()
    }

    /// Parsed clip intervals in turn order.
    pub fn clip_intervals(&self) -> Vec<TemporalInterval> {
        self.steps
            .iter()
            .filter_map(|s| s.turn.action().and_then(Action::clip_interval))
            .collect()
    }

    /// Structural equality ignoring each turn's raw serialization.
    pub fn structurally_eq(&self, other: &Self) -> bool {
        if self.video != other.video
            || self.question != other.question
            || self.terminated_by != other.terminated_by
            || self.group_id != other.group_id
            || self.steps.len() != other.steps.len()
        {
            return false;
        }
        self.steps.iter().zip(&other.steps).all(|(a, b)| {
            a.observation == b.observation
                && a.clip_error == b.clip_error
                && match (&a.turn, &b.turn) {
                    (TurnBody::Parsed(x), TurnBody::Parsed(y)) => x.structurally_eq(y),
                    (
                        TurnBody::Malformed { raw_text: xr, .. },
                        TurnBody::Malformed { raw_text: yr, .. },
                    ) => xr == yr,
                    _ => false,
                }
        })
    }
}

/// Returns the last turn's action if it is a final answer, absent otherwise.
pub fn final_action(t: &Trajectory) -> Option<&Action> {
    t.steps
        .last()
        .and_then(|s| s.turn.action())
        .filter(|a| a.is_answer())
}

/// Caps used when validating trajectories.
#[derive(Debug, Clone, Copy)]
pub struct ValidationLimits {
    pub t_max: usize,
    pub clip_max_frames: usize,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        Self {
            t_max: 3,
            clip_max_frames: 64,
        }
    }
}

/// One trajectory invariant violation. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("answer before final turn")]
    AnswerBeforeFinalTurn { turn: usize },
    #[error("turn count exceeds T_max")]
    TurnCountExceedsMax { turns: usize, t_max: usize },
    #[error("clip without observation")]
    ClipWithoutObservation { turn: usize },
    #[error("observation on final turn")]
    ObservationOnFinalTurn,
    #[error("observation attached to a non-clip turn")]
    ObservationWithoutClip { turn: usize },
    #[error("observation alongside clip error")]
    ObservationWithClipError { turn: usize },
    #[error("observation timestamps not strictly increasing")]
    TimestampsNotIncreasing { turn: usize },
    #[error("observation timestamp outside applied interval")]
    TimestampOutsideInterval { turn: usize },
    #[error("observation exceeds clip frame cap")]
    ObservationExceedsFrameCap { turn: usize, count: usize },
    #[error("terminated by answer without a final answer action")]
    AnswerTerminationWithoutAnswer,
    #[error("terminated by protocol error without a malformed final turn")]
    ProtocolErrorWithoutMalformedTurn,
    #[error("empty trajectory")]
    EmptyTrajectory,
}

/// Checks every trajectory invariant and returns all violations found.
///
/// Deterministic and side-effect free; an empty list means valid.
pub fn validate_trajectory(t: &Trajectory, limits: &ValidationLimits) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = t.steps.len();
    if n == 0 {
        out.push(Violation::EmptyTrajectory);
        return out;
    }
    if n > limits.t_max {
        out.push(Violation::TurnCountExceedsMax {
            turns: n,
            t_max: limits.t_max,
        });
    }
    for (i, step) in t.steps.iter().enumerate() {
        let last = i + 1 == n;
        match step.turn.action() {
            Some(a) if a.is_answer() => {
                if !last {
                    out.push(Violation::AnswerBeforeFinalTurn { turn: i });
                }
                if step.observation.is_some() {
                    out.push(Violation::ObservationWithoutClip { turn: i });
                }
            }
            Some(Action::Clip { .. }) => {
                if last {
                    if step.observation.is_some() {
                        out.push(Violation::ObservationOnFinalTurn);
                    }
                } else if step.observation.is_some() {
                    if step.clip_error.is_some() {
                        out.push(Violation::ObservationWithClipError { turn: i });
                    }
                } else if step.clip_error.is_none() {
                    out.push(Violation::ClipWithoutObservation { turn: i });
                }
            }
            Some(_) => unreachable!("all action variants covered"),
            None => {
                // Malformed turns never earn observations.
                if step.observation.is_some() {
                    out.push(Violation::ObservationWithoutClip { turn: i });
                }
            }
        }
        if let Some(obs) = &step.observation {
            if obs
                .frame_timestamps
                .windows(2)
                .any(|w| w[1] <= w[0])
            {
                out.push(Violation::TimestampsNotIncreasing { turn: i });
            }
            if obs
                .frame_timestamps
                .iter()
                .any(|&ts| !obs.interval_applied.contains(ts))
            {
                out.push(Violation::TimestampOutsideInterval { turn: i });
            }
            if obs.frame_timestamps.len() > limits.clip_max_frames {
                out.push(Violation::ObservationExceedsFrameCap {
                    turn: i,
                    count: obs.frame_timestamps.len(),
                });
            }
        }
    }
    match t.terminated_by {
        Termination::Answer => {
            if final_action(t).is_none() {
                out.push(Violation::AnswerTerminationWithoutAnswer);
            }
        }
        Termination::ProtocolError => {
            if !matches!(
                t.steps.last().map(|s| &s.turn),
                Some(TurnBody::Malformed { .. })
            ) {
                out.push(Violation::ProtocolErrorWithoutMalformedTurn);
            }
        }
        Termination::MaxTurns => {}
    }
    out
}

/// Soft warnings that do not affect validity (empty think text is legal but
/// flagged for inspection).
pub fn soft_warnings(t: &Trajectory) -> Vec<String> {
    let mut out = Vec::new();
    for (i, step) in t.steps.iter().enumerate() {
        if let TurnBody::Parsed(turn) = &step.turn {
            if turn.think.trim().is_empty() {
                out.push(format!("turn {i} has empty think text"));
            }
        }
    }
    out
}
