//! `clipgrounder eval`: join predictions with ground truth by id and emit
//! the duration-bucketed report as JSON, CSV, or a markdown table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use clipgrounder_core::evalkit::{bucketed_report, EvalRecord, ReportFormat};
use clipgrounder_core::types::{TaskKind, TemporalInterval};

use crate::commands::EXIT_OK;
use crate::io;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatName {
    Json,
    Csv,
    Md,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions JSONL: {"id","pred_interval"?,"pred_answer"?,"clip_count"?}.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth JSONL: {"id","duration_s","task","gt_interval"?,"gt_answer"?}.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    pub format: FormatName,
    /// Write the report here as well as stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Deserialize)]
struct PredLine {
    id: String,
    #[serde(default)]
    pred_interval: Option<TemporalInterval>,
    #[serde(default)]
    pred_answer: Option<String>,
    #[serde(default)]
    clip_count: usize,
}

#[derive(Deserialize)]
struct GtLine {
    id: String,
    duration_s: f64,
    task: TaskKind,
    #[serde(default)]
    gt_interval: Option<TemporalInterval>,
    #[serde(default)]
    gt_answer: Option<String>,
}

pub fn run(args: EvalArgs) -> anyhow::Result<i32> {
    let mut gt: BTreeMap<String, GtLine> = BTreeMap::new();
    for (i, line) in io::read_lines(&args.gt)?.iter().enumerate() {
        let parsed: GtLine =
            serde_json::from_str(line).with_context(|| format!("gt line {}", i + 1))?;
        if gt.insert(parsed.id.clone(), parsed).is_some() {
            bail!("duplicate id in ground truth (gt line {})", i + 1);
        }
    }
    let mut preds: BTreeMap<String, PredLine> = BTreeMap::new();
    for (i, line) in io::read_lines(&args.pred)?.iter().enumerate() {
        let parsed: PredLine =
            serde_json::from_str(line).with_context(|| format!("pred line {}", i + 1))?;
        if !gt.contains_key(&parsed.id) {
            bail!("prediction id {:?} has no ground truth entry", parsed.id);
        }
        if preds.insert(parsed.id.clone(), parsed).is_some() {
            bail!("duplicate id in predictions (pred line {})", i + 1);
        }
    }

    // Ground truth is the universe; a missing prediction scores zero.
    let records: Vec<EvalRecord> = gt
        .values()
        .map(|g| {
            let p = preds.get(&g.id);
            EvalRecord {
                id: g.id.clone(),
                duration_s: g.duration_s,
                task: g.task,
                pred_interval: p.and_then(|p| p.pred_interval),
                gt_interval: g.gt_interval,
                pred_answer: p.and_then(|p| p.pred_answer.clone()),
                gt_answer: g.gt_answer.clone(),
                clip_count: p.map_or(0, |p| p.clip_count),
            }
        })
        .collect();

    let report = bucketed_report(&records);
    let rendered = report.render(match args.format {
        FormatName::Json => ReportFormat::Json,
        FormatName::Csv => ReportFormat::Csv,
        FormatName::Md => ReportFormat::Md,
    });
    print!("{rendered}");
    if !rendered.ends_with('\n') {
        println!();
    }
    if let Some(path) = &args.output {
        std::fs::write(path, &rendered).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(EXIT_OK)
}
