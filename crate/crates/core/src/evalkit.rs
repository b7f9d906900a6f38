//! Metrics and duration-bucketed reporting: mIoU, recall at an IoU
//! threshold, answer accuracy, and the four-bucket table with tool-call
//! statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{accuracy_reward, temporal_iou, Matcher};
use crate::types::{final_action, Action, TaskKind, TemporalInterval, Trajectory};

/// The four duration categories, partitioning `[0, inf)` seconds as
/// `[0,180) [180,600) [600,1200) [1200,inf)`, lower-inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationBucket {
    B0To3Min,
    B3To10Min,
    B10To20Min,
    B20MinPlus,
}

impl DurationBucket {
    pub const ALL: [DurationBucket; 4] = [
        DurationBucket::B0To3Min,
        DurationBucket::B3To10Min,
        DurationBucket::B10To20Min,
        DurationBucket::B20MinPlus,
    ];

    /// `(lo, hi)` bounds in seconds; the last bucket is open-ended.
    pub fn bounds_s(&self) -> (f64, Option<f64>) {
        match self {
            DurationBucket::B0To3Min => (0.0, Some(180.0)),
            DurationBucket::B3To10Min => (180.0, Some(600.0)),
            DurationBucket::B10To20Min => (600.0, Some(1200.0)),
            DurationBucket::B20MinPlus => (1200.0, None),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DurationBucket::B0To3Min => "0-3min",
            DurationBucket::B3To10Min => "3-10min",
            DurationBucket::B10To20Min => "10-20min",
            DurationBucket::B20MinPlus => ">20min",
        }
    }
}

/// Maps a duration to its bucket. Total over all non-negative durations.
pub fn bucket_of(duration_s: f64) -> DurationBucket {
    if duration_s < 180.0 {
        DurationBucket::B0To3Min
    } else if duration_s < 600.0 {
        DurationBucket::B3To10Min
    } else if duration_s < 1200.0 {
        DurationBucket::B10To20Min
    } else {
        DurationBucket::B20MinPlus
    }
}

/// Per-sample evaluation quantities. At least one of the interval pair or the
/// answer pair must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub duration_s: f64,
    pub task: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_interval: Option<TemporalInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_interval: Option<TemporalInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_answer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gt_answer: Option<String>,
    pub clip_count: usize,
}

impl EvalRecord {
    /// Extracts the evaluation view of a finished trajectory: grounding tasks
    /// are scored on the final interval answer, QA tasks on the last clip
    /// before the answer.
    pub fn from_trajectory(id: impl Into<String>, t: &Trajectory) -> Self {
        let pred_interval = match t.question.task {
            TaskKind::Grounding => match final_action(t) {
                Some(Action::AnswerInterval { interval }) => Some(*interval),
                _ => None,
            },
            TaskKind::Videoqa => t.clip_intervals().last().copied(),
        };
        let pred_answer = match final_action(t) {
            Some(Action::AnswerText { text }) => Some(text.clone()),
            _ => None,
        };
        Self {
            id: id.into(),
            duration_s: t.video.duration_s(),
            task: t.question.task,
            pred_interval,
            gt_interval: t.question.gt_interval,
            pred_answer,
            gt_answer: t.question.gt_answer.clone(),
            clip_count: t.clip_intervals().len(),
        }
    }

    fn iou(&self) -> Option<f64> {
        match (self.gt_interval, self.pred_interval) {
            (Some(gt), Some(pred)) => Some(temporal_iou(pred, gt)),
            // An annotated interval with no usable prediction scores 0.
            (Some(_), None) => Some(0.0),
            _ => None,
        }
    }

    fn answer_hit(&self) -> Option<f64> {
        match (&self.gt_answer, &self.pred_answer) {
            (Some(gt), Some(pred)) => Some(accuracy_reward(pred, gt, Matcher::McNormalized)),
            (Some(_), None) => Some(0.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("record {0} lacks the fields this metric needs")]
    MissingField(String),
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
}

/// Mean IoU over records carrying ground-truth intervals.
pub fn miou(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sum = 0.0;
    for r in records {
        sum += r.iou().ok_or_else(|| EvalError::MissingField(r.id.clone()))?;
    }
    Ok(sum / records.len() as f64)
}

/// Fraction of records with IoU at or above the threshold (a hit at exactly
/// the threshold counts).
pub fn recall_at_iou(records: &[EvalRecord], threshold: f64) -> Result<f64, EvalError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut hits = 0usize;
    for r in records {
        let iou = r.iou().ok_or_else(|| EvalError::MissingField(r.id.clone()))?;
        if iou >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Mean answer accuracy under the normalized multiple-choice matcher.
pub fn accuracy(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut sum = 0.0;
    for r in records {
        sum += r
            .answer_hit()
            .ok_or_else(|| EvalError::MissingField(r.id.clone()))?;
    }
    Ok(sum / records.len() as f64)
}

/// One row of the bucketed report. Metrics are absent when no record in the
/// bucket carries the needed fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub label: String,
    pub n: usize,
    pub miou: Option<f64>,
    /// Records contributing to mIoU (grounding-only records are excluded
    /// from Acc, so the two counts can differ).
    pub n_iou: usize,
    pub acc: Option<f64>,
    pub n_acc: usize,
    pub clip_ratio: Option<f64>,
    pub avg_clips: Option<f64>,
}

/// The full duration-bucketed table plus an overall row averaged over
/// records (not over buckets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedReport {
    pub buckets: Vec<BucketRow>,
    pub overall: BucketRow,
}

fn row_for(label: &str, records: &[&EvalRecord]) -> BucketRow {
    let ious: Vec<f64> = records.iter().filter_map(|r| r.iou()).collect();
    let hits: Vec<f64> = records.iter().filter_map(|r| r.answer_hit()).collect();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    let (clip_ratio, avg_clips) = if records.is_empty() {
        (None, None)
    } else {
        let n = records.len() as f64;
        let with_clip = records.iter().filter(|r| r.clip_count > 0).count() as f64;
        let total: usize = records.iter().map(|r| r.clip_count).sum();
        (Some(with_clip / n), Some(total as f64 / n))
    };
    BucketRow {
        label: label.to_string(),
        n: records.len(),
        miou: mean(&ious),
        n_iou: ious.len(),
        acc: mean(&hits),
        n_acc: hits.len(),
        clip_ratio,
        avg_clips,
    }
}

/// Builds the per-bucket table in ascending bucket order plus the overall row.
pub fn bucketed_report(records: &[EvalRecord]) -> BucketedReport {
    let buckets = DurationBucket::ALL
        .iter()
        .map(|bucket| {
            let members: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| bucket_of(r.duration_s) == *bucket)
                .collect();
            row_for(bucket.label(), &members)
        })
        .collect();
    let all: Vec<&EvalRecord> = records.iter().collect();
    BucketedReport {
        buckets,
        overall: row_for("overall", &all),
    }
}

/// Report emission format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Md,
}

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

impl BucketedReport {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => {
                serde_json::to_string_pretty(self).expect("report serializes")
            }
            ReportFormat::Csv => {
                let mut out =
                    String::from("bucket,n,miou,n_iou,acc,n_acc,clip_ratio,avg_clips\n");
                for row in self.buckets.iter().chain(std::iter::once(&self.overall)) {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        row.label,
                        row.n,
                        cell(row.miou),
                        row.n_iou,
                        cell(row.acc),
                        row.n_acc,
                        cell(row.clip_ratio),
                        cell(row.avg_clips),
                    ));
                }
                out
            }
            ReportFormat::Md => {
                let mut out = String::from(
                    "| bucket | n | mIoU | n_iou | Acc | n_acc | clip_ratio | avg_clips |\n|---|---|---|---|---|---|---|---|\n",
                );
                for row in self.buckets.iter().chain(std::iter::once(&self.overall)) {
                    out.push_str(&format!(
                        "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                        row.label,
                        row.n,
                        cell(row.miou),
                        row.n_iou,
                        cell(row.acc),
                        row.n_acc,
                        cell(row.clip_ratio),
                        cell(row.avg_clips),
                    ));
                }
                out
            }
        }
    }
}
