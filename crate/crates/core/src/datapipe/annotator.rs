//! The annotator abstraction: an opaque external model asked to ground,
//! answer from a clip, answer in full context, or reground after a failure.
//!
//! The mock is table-driven and stateless: it tells first attempts from
//! retries by which candidate interval the call refers to.

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::RawSample;
use crate::protocol::parse_interval_literal;
use crate::rollout::{RemoteClient, WireMessage, WirePart};
use crate::types::{Observation, TemporalInterval};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotatorError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("no mock entry for sample {0}")]
    MissingEntry(String),
    #[error("annotator response not usable: {0}")]
    BadResponse(String),
}

/// Transcript of one verification attempt, carried into retry context.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptLog {
    pub candidate: TemporalInterval,
    pub step1_answer: Option<String>,
    pub step1_pass: bool,
    pub step2_answer: Option<String>,
    pub step2_pass: Option<bool>,
}

/// The accumulated context an annotator sees: the candidate under discussion
/// and the full transcript of prior failed attempts.
#[derive(Debug, Clone, PartialEq)]
pub struct CurationContext {
    pub candidate: TemporalInterval,
    pub attempts: Vec<AttemptLog>,
}

pub trait Annotator: Send + Sync {
    fn ground(&self, sample: &RawSample) -> Result<TemporalInterval, AnnotatorError>;
    fn answer_from_clip(
        &self,
        sample: &RawSample,
        clip: &Observation,
    ) -> Result<String, AnnotatorError>;
    fn answer_full_context(
        &self,
        sample: &RawSample,
        ctx: &CurationContext,
    ) -> Result<String, AnnotatorError>;
    fn reground(
        &self,
        sample: &RawSample,
        failure: &CurationContext,
    ) -> Result<TemporalInterval, AnnotatorError>;
    /// Optional reasoning text to seed think fields in assembled data.
    fn reasoning(&self, _sample: &RawSample) -> Option<String> {
        None
    }
}

/// One sample's scripted behavior in the mock table. Retry fields fall back
/// to the first-attempt values when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MockEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_clip: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_full: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reground: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_clip_retry: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_full_retry: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub think: Option<String>,
}

/// The on-disk mock table: per-sample entries plus an optional default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MockTable {
    #[serde(default)]
    pub samples: BTreeMap<String, MockEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<MockEntry>,
}

/// Deterministic table-driven annotator.
pub struct MockAnnotator {
    table: MockTable,
}

impl MockAnnotator {
    pub fn new(table: MockTable) -> Self {
        Self { table }
    }

    pub fn from_json(json: &str) -> Result<Self, AnnotatorError> {
        serde_json::from_str(json)
            .map(Self::new)
            .map_err(|e| AnnotatorError::BadResponse(format!("mock table: {e}")))
    }

    fn entry(&self, sample: &RawSample) -> Result<&MockEntry, AnnotatorError> {
        self.table
            .samples
            .get(&sample.id)
            .or(self.table.default.as_ref())
            .ok_or_else(|| AnnotatorError::MissingEntry(sample.id.clone()))
    }

    /// Whether the interval the call refers to is the reground candidate.
    fn is_retry(entry: &MockEntry, interval: TemporalInterval) -> bool {
        match entry.reground {
            Some([a, b]) => {
                (interval.start_s() - a).abs() < 1e-9 && (interval.end_s() - b).abs() < 1e-9
            }
            None => false,
        }
    }
}

impl Annotator for MockAnnotator {
    fn ground(&self, sample: &RawSample) -> Result<TemporalInterval, AnnotatorError> {
        let entry = self.entry(sample)?;
        let [a, b] = entry
            .ground
            .ok_or_else(|| AnnotatorError::BadResponse("mock entry lacks ground".into()))?;
        TemporalInterval::new(a, b)
            .map_err(|e| AnnotatorError::BadResponse(format!("mock ground interval: {e}")))
    }

    fn answer_from_clip(
        &self,
        sample: &RawSample,
        clip: &Observation,
    ) -> Result<String, AnnotatorError> {
        let entry = self.entry(sample)?;
        let answer = if Self::is_retry(entry, clip.interval_applied) {
            entry.answer_clip_retry.as_ref().or(entry.answer_clip.as_ref())
        } else {
            entry.answer_clip.as_ref()
        };
        answer
            .cloned()
            .ok_or_else(|| AnnotatorError::BadResponse("mock entry lacks answer_clip".into()))
    }

    fn answer_full_context(
        &self,
        sample: &RawSample,
        ctx: &CurationContext,
    ) -> Result<String, AnnotatorError> {
        let entry = self.entry(sample)?;
        let answer = if Self::is_retry(entry, ctx.candidate) {
            entry.answer_full_retry.as_ref().or(entry.answer_full.as_ref())
        } else {
            entry.answer_full.as_ref()
        };
        answer
            .cloned()
            .ok_or_else(|| AnnotatorError::BadResponse("mock entry lacks answer_full".into()))
    }

    fn reground(
        &self,
        sample: &RawSample,
        _failure: &CurationContext,
    ) -> Result<TemporalInterval, AnnotatorError> {
        let entry = self.entry(sample)?;
        let [a, b] = entry
            .reground
            .ok_or_else(|| AnnotatorError::BadResponse("mock entry lacks reground".into()))?;
        TemporalInterval::new(a, b)
            .map_err(|e| AnnotatorError::BadResponse(format!("mock reground interval: {e}")))
    }

    fn reasoning(&self, sample: &RawSample) -> Option<String> {
        self.entry(sample).ok().and_then(|e| e.think.clone())
    }
}

/// An annotator served over the same HTTP contract as the remote policy.
/// Prompts are pass-through configuration, not logic.
pub struct HttpAnnotator {
    client: RemoteClient,
    seed: u64,
    prompts: AnnotatorPrompts,
}

#[derive(Debug, Clone)]
pub struct AnnotatorPrompts {
    pub ground: String,
    pub answer_clip: String,
    pub answer_full: String,
    pub reground: String,
}

impl Default for AnnotatorPrompts {
    fn default() -> Self {
        Self {
            ground: "Identify the segment of the video relevant to the question. \
                     Reply with [start_seconds, end_seconds]."
                .into(),
            answer_clip: "Answer the question using only the provided clip.".into(),
            answer_full: "Answer the question using the full context above.".into(),
            reground: "The previous segment failed verification. Propose a better \
                       segment as [start_seconds, end_seconds]."
                .into(),
        }
    }
}

impl HttpAnnotator {
    pub fn new(client: RemoteClient, seed: u64) -> Self {
        Self {
            client,
            seed,
            prompts: AnnotatorPrompts::default(),
        }
    }

    pub fn with_prompts(mut self, prompts: AnnotatorPrompts) -> Self {
        self.prompts = prompts;
        self
    }

    fn call(
        &self,
        sample: &RawSample,
        kind: &str,
        messages: Vec<WireMessage>,
    ) -> Result<String, AnnotatorError> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(crate::exec::derive_seed(
            self.seed,
            fxhash(&format!("{}:{kind}", sample.id)),
        ));
        let request_id = format!("{}-{kind}-{:016x}", sample.id, rng.gen::<u64>());
        self.client
            .generate(&messages, &request_id)
            .map_err(|e| AnnotatorError::Transport(e.to_string()))
    }

    fn user_text(&self, sample: &RawSample, instruction: &str) -> WireMessage {
        WireMessage {
            role: "user".to_string(),
            content: vec![WirePart::Text {
                text: format!(
                    "{instruction}\nVideo: {} ({} s)\nQuestion: {}",
                    sample.video.id(),
                    sample.video.duration_s(),
                    sample.question
                ),
            }],
        }
    }

    fn parse_interval(text: &str) -> Result<TemporalInterval, AnnotatorError> {
        parse_interval_literal(text)
            .and_then(|(a, b)| TemporalInterval::new(a, b).ok())
            .ok_or_else(|| AnnotatorError::BadResponse(format!("expected [a, b], got {text:?}")))
    }

    fn context_messages(&self, ctx: &CurationContext) -> Vec<WireMessage> {
        ctx.attempts
            .iter()
            .map(|a| WireMessage {
                role: "tool".to_string(),
                content: vec![WirePart::Text {
                    text: format!(
                        "attempt on [{}, {}]: step1 {} ({:?}), step2 {:?} ({:?})",
                        a.candidate.start_s(),
                        a.candidate.end_s(),
                        if a.step1_pass { "pass" } else { "fail" },
                        a.step1_answer,
                        a.step2_pass,
                        a.step2_answer,
                    ),
                }],
            })
            .collect()
    }
}

fn fxhash(s: &str) -> u64 {
    // Small stable string hash for request-id derivation.
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Annotator for HttpAnnotator {
    fn ground(&self, sample: &RawSample) -> Result<TemporalInterval, AnnotatorError> {
        let messages = vec![self.user_text(sample, &self.prompts.ground)];
        Self::parse_interval(&self.call(sample, "ground", messages)?)
    }

    fn answer_from_clip(
        &self,
        sample: &RawSample,
        clip: &Observation,
    ) -> Result<String, AnnotatorError> {
        let mut messages = vec![self.user_text(sample, &self.prompts.answer_clip)];
        messages.push(WireMessage {
            role: "tool".to_string(),
            content: vec![WirePart::Frames {
                timestamps: clip.frame_timestamps.clone(),
                clip: clip.interval_applied.into(),
            }],
        });
        self.call(sample, "answer_clip", messages)
    }

    fn answer_full_context(
        &self,
        sample: &RawSample,
        ctx: &CurationContext,
    ) -> Result<String, AnnotatorError> {
        let mut messages = vec![self.user_text(sample, &self.prompts.answer_full)];
        messages.extend(self.context_messages(ctx));
        self.call(sample, "answer_full", messages)
    }

    fn reground(
        &self,
        sample: &RawSample,
        failure: &CurationContext,
    ) -> Result<TemporalInterval, AnnotatorError> {
        let mut messages = vec![self.user_text(sample, &self.prompts.reground)];
        messages.extend(self.context_messages(failure));
        Self::parse_interval(&self.call(sample, "reground", messages)?)
    }
}
