//! A desk-scale stand-in for real videos: each instance hides an evidence
//! interval and an answer table. A query is answered correctly exactly when
//! the clips observed so far cover enough of the evidence.

use std::collections::HashMap;

use crate::types::{Choice, Question, Step, TaskKind, TemporalInterval, VideoMeta};

/// One synthetic instance: video metadata plus the hidden evidence interval
/// and answer table that evaluation never reveals to remote policies.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub meta: VideoMeta,
    pub evidence: TemporalInterval,
    pub correct_answer: String,
    pub decoy_answer: String,
    /// Fraction of the evidence interval that must be covered by observed
    /// clips before the question becomes answerable.
    pub coverage_fraction: f64,
    pub question_text: String,
    pub task: TaskKind,
}

impl SyntheticVideo {
    pub fn build(
        id: &str,
        duration_s: f64,
        evidence: TemporalInterval,
        correct: &str,
        decoy: &str,
        coverage_fraction: f64,
    ) -> Self {
        let meta = VideoMeta::new(id, duration_s, None).expect("positive duration");
        assert!(
            evidence.end_s() <= duration_s,
            "evidence must lie inside the video"
        );
        Self {
            meta,
            evidence,
            correct_answer: correct.to_string(),
            decoy_answer: decoy.to_string(),
            coverage_fraction,
            question_text: "Which option describes the key moment?".to_string(),
            task: TaskKind::Videoqa,
        }
    }

    /// The question carried by this instance: grounded QA gets choices and
    /// an answer key; a pure grounding query carries only the interval.
    pub fn question(&self) -> Question {
        let qa = self.task == TaskKind::Videoqa;
        let choices = ["A", "B", "C", "D"]
            .iter()
            .map(|label| Choice {
                label: label.to_string(),
                text: format!("option {label}"),
            })
            .collect();
        Question {
            text: self.question_text.clone(),
            task: self.task,
            choices: qa.then_some(choices),
            gt_answer: qa.then(|| self.correct_answer.clone()),
            gt_interval: Some(self.evidence),
        }
    }

    /// Fraction of the evidence interval covered by the clip observations in
    /// `steps`. Each observation counts for its full applied interval (its
    /// bin-centered timestamps tile the span).
    pub fn coverage(&self, steps: &[Step]) -> f64 {
        let mut spans: Vec<(f64, f64)> = steps
            .iter()
            .filter_map(|s| s.observation.as_ref())
            .map(|o| (o.interval_applied.start_s(), o.interval_applied.end_s()))
            .collect();
        if spans.is_empty() {
            return 0.0;
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ev = (self.evidence.start_s(), self.evidence.end_s());
        let ev_len = ev.1 - ev.0;
        if ev_len <= 0.0 {
            // Point evidence: covered iff some clip contains the point.
            return if spans.iter().any(|&(s, e)| s <= ev.0 && ev.0 <= e) {
                1.0
            } else {
                0.0
            };
        }
        let mut covered = 0.0;
        let mut cursor = ev.0;
        for (s, e) in spans {
            let lo = s.max(cursor).max(ev.0);
            let hi = e.min(ev.1);
            if hi > lo {
                covered += hi - lo;
                cursor = hi;
            }
        }
        covered / ev_len
    }

    /// The answer the environment grants given what has been observed:
    /// the correct option once coverage reaches the threshold, a fixed decoy
    /// otherwise.
    pub fn respond(&self, steps: &[Step]) -> &str {
        if self.coverage(steps) >= self.coverage_fraction {
            &self.correct_answer
        } else {
            &self.decoy_answer
        }
    }
}

/// An indexed set of synthetic instances; scripted policies look their
/// current instance up by video id.
#[derive(Debug, Default)]
pub struct SyntheticWorld {
    by_id: HashMap<String, SyntheticVideo>,
    order: Vec<String>,
}

impl SyntheticWorld {
    pub fn new(instances: Vec<SyntheticVideo>) -> Self {
        let order: Vec<String> = instances.iter().map(|v| v.meta.id().to_string()).collect();
        let by_id = instances
            .into_iter()
            .map(|v| (v.meta.id().to_string(), v))
            .collect();
        Self { by_id, order }
    }

    pub fn get(&self, id: &str) -> Option<&SyntheticVideo> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Instances in insertion order.
    pub fn instances(&self) -> impl Iterator<Item = &SyntheticVideo> {
        self.order.iter().map(|id| &self.by_id[id])
    }
}
