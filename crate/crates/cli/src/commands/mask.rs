//! `clipgrounder mask`: unified SFT supervision masks for pre-tokenized span
//! files, one line per sample.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use clipgrounder_core::masking::{masked_token_count, unified_mask, MessageSpan, Role};

use crate::commands::{EXIT_OK, EXIT_PARTIAL};
use crate::io;

#[derive(Args)]
pub struct MaskArgs {
    /// Input JSONL: {"sample_id", "spans":[{"role","start","len"}]}.
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSONL with a "supervised" flag per span.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Deserialize)]
struct SampleIn {
    sample_id: String,
    spans: Vec<SpanIn>,
}

#[derive(Deserialize)]
struct SpanIn {
    role: Role,
    start: usize,
    len: usize,
    #[serde(default)]
    turn_index: Option<usize>,
}

#[derive(Serialize)]
struct SampleOut {
    sample_id: String,
    spans: Vec<SpanOut>,
}

#[derive(Serialize)]
struct SpanOut {
    role: Role,
    start: usize,
    len: usize,
    supervised: bool,
}

#[derive(Serialize)]
struct ErrorRecord {
    line: usize,
    error: String,
}

fn mask_line(line: &str) -> Result<SampleOut, String> {
    let sample: SampleIn = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let spans: Vec<MessageSpan> = sample
        .spans
        .iter()
        .map(|s| MessageSpan {
            role: s.role,
            start: s.start,
            len: s.len,
            turn_index: s.turn_index,
        })
        .collect();
    let mask = unified_mask(&spans).map_err(|e| e.to_string())?;
    // Sanity: the two counts always partition the total.
    masked_token_count(&mask, &spans).map_err(|e| e.to_string())?;
    let spans = spans
        .into_iter()
        .zip(mask.0)
        .map(|(s, supervised)| SpanOut {
            role: s.role,
            start: s.start,
            len: s.len,
            supervised,
        })
        .collect();
    Ok(SampleOut {
        sample_id: sample.sample_id,
        spans,
    })
}

pub fn run(args: MaskArgs) -> anyhow::Result<i32> {
    let lines = io::read_lines(&args.input)?;
    let mut failures = 0usize;
    let out: Vec<String> = lines
        .iter()
        .enumerate()
        .map(|(i, line)| match mask_line(line) {
            Ok(record) => serde_json::to_string(&record).expect("record serializes"),
            Err(error) => {
                failures += 1;
                serde_json::to_string(&ErrorRecord { line: i + 1, error })
                    .expect("error record serializes")
            }
        })
        .collect();
    io::write_lines(&args.output, &out)?;
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}
