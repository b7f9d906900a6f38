//! `clipgrounder curate`: the two-step verification pipeline over raw
//! samples, with a table-driven mock or a remote annotator. Retained samples
//! become SFT trajectories; everything is audited; transport failures land in
//! a retry queue instead of being dropped.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;

use clipgrounder_core::datapipe::{
    assemble_trajectory, curate, Annotator, AnnotatorError, CurateConfig, CurateError,
    CurationOutcome, CurationRecord, HttpAnnotator, MockAnnotator, RawSample,
};
use clipgrounder_core::exec;
use clipgrounder_core::jsonl::encode_trajectory;
use clipgrounder_core::rollout::RemoteClient;

use crate::commands::{EXIT_OK, EXIT_PARTIAL, EXIT_TRANSPORT};
use crate::io;

#[derive(Args)]
pub struct CurateArgs {
    /// Raw sample JSONL input.
    #[arg(long)]
    pub input: PathBuf,
    /// Annotator selector: `mock:<table.json>` or `http:<url>`.
    #[arg(long)]
    pub annotator: String,
    /// Curated trajectory JSONL output (retained samples only).
    #[arg(long)]
    pub output: PathBuf,
    /// Audit log JSONL (every sample).
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Deferred samples (annotator transport failures) are written here;
    /// defaults to `<output>.retry.jsonl`.
    #[arg(long)]
    pub retry_queue: Option<PathBuf>,
    /// Generation temperature for the http annotator.
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Seed for annotator request ids.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parallel worker cap.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn build_annotator(args: &CurateArgs) -> anyhow::Result<Box<dyn Annotator>> {
    if let Some(path) = args.annotator.strip_prefix("mock:") {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading mock table {path}"))?;
        Ok(Box::new(
            MockAnnotator::from_json(&text).map_err(anyhow::Error::msg)?,
        ))
    } else if let Some(url) = args.annotator.strip_prefix("http:") {
        // Accept both `http:<url>` and a bare `http://...` URL.
        let url = if url.starts_with("//") {
            format!("http:{url}")
        } else {
            url.to_string()
        };
        Ok(Box::new(HttpAnnotator::new(
            RemoteClient::new(&url, args.temperature),
            args.seed,
        )))
    } else {
        bail!("--annotator must be mock:<table.json> or http:<url>");
    }
}

#[derive(Serialize)]
struct AuditLine<'a> {
    id: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<CurationOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step1_pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step2_pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retry_used: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<String>,
}

enum SampleResult {
    Curated(Box<CurationRecord>),
    Deferred(String),
    Failed(String),
}

/// Merge the curation block into an encoded trajectory line.
fn curated_line(t: &clipgrounder_core::types::Trajectory, record: &CurationRecord) -> String {
    let mut value: serde_json::Value =
        serde_json::from_str(&encode_trajectory(t)).expect("trajectory re-parses");
    value["curation"] = serde_json::json!({
        "outcome": record.outcome,
        "retry_used": record.retry_used,
    });
    value.to_string()
}

pub fn run(args: CurateArgs) -> anyhow::Result<i32> {
    let annotator = build_annotator(&args)?;
    let cfg = CurateConfig::default();
    let lines = io::read_lines(&args.input)?;
    let samples: Vec<Result<RawSample, String>> = lines
        .iter()
        .map(|l| serde_json::from_str::<RawSample>(l).map_err(|e| e.to_string()))
        .collect();

    let results: Vec<Option<SampleResult>> = exec::with_jobs(args.jobs, || {
        exec::map_batch(&samples, |sample| match sample {
            Err(e) => Some(SampleResult::Failed(e.clone())),
            Ok(sample) => match curate(sample, &*annotator, &cfg) {
                Ok(record) => Some(SampleResult::Curated(Box::new(record))),
                Err(CurateError::Annotator(
                    e @ (AnnotatorError::Transport(_) | AnnotatorError::MissingEntry(_)),
                )) => Some(SampleResult::Deferred(e.to_string())),
                Err(e) => Some(SampleResult::Failed(e.to_string())),
            },
        })
    });

    let mut curated = Vec::new();
    let mut audit = Vec::new();
    let mut retry_queue = Vec::new();
    let mut failures = 0usize;
    let mut deferred = 0usize;
    for (i, result) in results.into_iter().enumerate() {
        let sample_id = samples[i]
            .as_ref()
            .map(|s| s.id.clone())
            .unwrap_or_else(|_| format!("line-{}", i + 1));
        match result.expect("every sample produces a result") {
            SampleResult::Curated(record) => {
                let mut detail = None;
                if record.outcome != CurationOutcome::Discarded {
                    match samples[i]
                        .as_ref()
                        .ok()
                        .map(|s| assemble_trajectory(&record, s, &cfg))
                    {
                        Some(Ok(t)) => curated.push(curated_line(&t, &record)),
                        Some(Err(e)) => {
                            failures += 1;
                            detail = Some(e.to_string());
                        }
                        None => unreachable!("curated samples parsed"),
                    }
                }
                audit.push(
                    serde_json::to_string(&AuditLine {
                        id: &sample_id,
                        status: "curated",
                        outcome: Some(record.outcome),
                        step1_pass: Some(record.step1_pass),
                        step2_pass: Some(record.step2_pass),
                        retry_used: Some(record.retry_used),
                        candidates: Some(
                            record.candidates.iter().map(|c| (*c).into()).collect(),
                        ),
                        detail,
                    })
                    .expect("audit serializes"),
                );
            }
            SampleResult::Deferred(reason) => {
                deferred += 1;
                retry_queue.push(serde_json::json!({
                    "sample": serde_json::from_str::<serde_json::Value>(&lines[i])
                        .unwrap_or(serde_json::Value::Null),
                    "defer_reason": reason,
                }).to_string());
                audit.push(
                    serde_json::to_string(&AuditLine {
                        id: &sample_id,
                        status: "deferred",
                        outcome: None,
                        step1_pass: None,
                        step2_pass: None,
                        retry_used: None,
                        candidates: None,
                        detail: Some(reason),
                    })
                    .expect("audit serializes"),
                );
            }
            SampleResult::Failed(reason) => {
                failures += 1;
                audit.push(
                    serde_json::to_string(&AuditLine {
                        id: &sample_id,
                        status: "error",
                        outcome: None,
                        step1_pass: None,
                        step2_pass: None,
                        retry_used: None,
                        candidates: None,
                        detail: Some(reason),
                    })
                    .expect("audit serializes"),
                );
            }
        }
    }

    io::write_lines(&args.output, &curated)?;
    if let Some(path) = &args.audit {
        io::write_lines(path, &audit)?;
    }
    // Deferred samples are never silently dropped.
    let queue_path = args.retry_queue.clone().unwrap_or_else(|| {
        let mut p = args.output.as_os_str().to_owned();
        p.push(".retry.jsonl");
        PathBuf::from(p)
    });
    io::write_lines(&queue_path, &retry_queue)?;
    if deferred > 0 {
        log::warn!("{deferred} sample(s) deferred to {}", queue_path.display());
    }

    if deferred > 0 {
        return Ok(EXIT_TRANSPORT);
    }
    if failures > 0 {
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}
