//! `clipgrounder rollout`: run a scripted or remote policy over synthetic
//! instances, emitting trajectories (tagged with their group), tool-call
//! stats, and optional eval-ready prediction/ground-truth files.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use clipgrounder_core::evalkit::EvalRecord;
use clipgrounder_core::exec;
use clipgrounder_core::jsonl::encode_trajectory;
use clipgrounder_core::rollout::{
    run_rollout, toolcall_behavior, BlindPolicy, DirectAnswerPolicy, HttpPolicy,
    LengthAwarePolicy, NoisyPolicy, OraclePolicy, Policy, PolicyError, RefinePolicy,
    RemoteClient, RolloutConfig, RolloutError, SyntheticVideo, SyntheticWorld, ToolCallStats,
};
use clipgrounder_core::synthbench::{generate, BenchInstanceWire, BenchSpec};
use clipgrounder_core::types::{TaskKind, Trajectory};

use crate::commands::{EXIT_OK, EXIT_TRANSPORT};
use crate::io;

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    Oracle,
    Refine,
    Blind,
    Direct,
    Noisy,
    LengthAware,
    Http,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvName {
    Synthetic,
}

#[derive(Args)]
pub struct RolloutArgs {
    /// Environment to roll in.
    #[arg(long, value_enum, default_value = "synthetic")]
    pub env: EnvName,
    /// Policy implementation.
    #[arg(long, value_enum)]
    pub policy: PolicyName,
    /// Trajectories per (video, question) group.
    #[arg(long, default_value_t = 1)]
    pub group_size: usize,
    /// Master seed; everything derives from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output trajectory JSONL.
    #[arg(long)]
    pub output: PathBuf,
    /// Load instances from a bench JSONL instead of generating.
    #[arg(long)]
    pub bench: Option<PathBuf>,
    /// Instances generated per duration bucket when no bench file is given.
    #[arg(long, default_value_t = 2)]
    pub per_bucket: usize,
    /// Generate grounding-task instances instead of grounded QA.
    #[arg(long)]
    pub grounding: bool,
    /// Maximum assistant turns per trajectory.
    #[arg(long, default_value_t = 3)]
    pub t_max: usize,
    /// Sampling-rate cap in frames per second.
    #[arg(long, default_value_t = 2.0)]
    pub fps_cap: f64,
    /// Frame budget for the whole-video skim.
    #[arg(long, default_value_t = 512)]
    pub skim_max_frames: usize,
    /// Frame budget per clip.
    #[arg(long, default_value_t = 64)]
    pub clip_max_frames: usize,
    /// Remote policy server root (required with --policy http).
    #[arg(long)]
    pub policy_url: Option<String>,
    /// Generation temperature forwarded to the remote policy.
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Write the tool-call stats JSON here as well as stdout.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Write eval-ready predictions here.
    #[arg(long)]
    pub pred_out: Option<PathBuf>,
    /// Write eval-ready ground truth here.
    #[arg(long)]
    pub gt_out: Option<PathBuf>,
    /// Parallel worker cap.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Serialize)]
struct StatsOut {
    instances: usize,
    trajectories: usize,
    failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    toolcalls: Option<ToolCallStats>,
}

fn load_instances(args: &RolloutArgs) -> anyhow::Result<Vec<SyntheticVideo>> {
    match &args.bench {
        Some(path) => {
            let lines = io::read_lines(path)?;
            lines
                .iter()
                .enumerate()
                .map(|(i, line)| {
                    let wire: BenchInstanceWire = serde_json::from_str(line)
                        .with_context(|| format!("bench line {}", i + 1))?;
                    Ok(wire.into_synthetic())
                })
                .collect()
        }
        None => {
            let spec = BenchSpec {
                per_bucket: [args.per_bucket; 4],
                seed: args.seed,
                task: if args.grounding {
                    TaskKind::Grounding
                } else {
                    TaskKind::Videoqa
                },
                ..BenchSpec::default()
            };
            Ok(generate(&spec))
        }
    }
}

fn build_policy(
    args: &RolloutArgs,
    world: Arc<SyntheticWorld>,
) -> anyhow::Result<Box<dyn Policy>> {
    Ok(match args.policy {
        PolicyName::Oracle => Box::new(OraclePolicy::new(world)),
        PolicyName::Refine => Box::new(RefinePolicy::new(world)),
        PolicyName::Blind => Box::new(BlindPolicy::new(world)),
        PolicyName::Direct => Box::new(DirectAnswerPolicy::new(world)),
        PolicyName::Noisy => Box::new(NoisyPolicy::new(world)),
        PolicyName::LengthAware => Box::new(LengthAwarePolicy::new(world)),
        PolicyName::Http => {
            let url = args
                .policy_url
                .as_deref()
                .ok_or_else(|| anyhow::anyhow!("--policy http requires --policy-url"))?;
            Box::new(HttpPolicy::new(RemoteClient::new(url, args.temperature)))
        }
    })
}

pub fn run(args: RolloutArgs) -> anyhow::Result<i32> {
    if args.group_size == 0 {
        bail!("--group-size must be at least 1");
    }
    let instances = load_instances(&args)?;
    if instances.is_empty() {
        bail!("no instances to roll out");
    }
    let world = Arc::new(SyntheticWorld::new(instances.clone()));
    let policy = build_policy(&args, Arc::clone(&world))?;
    let sampling = clipgrounder_core::cliptool::SamplingConfig {
        fps_cap: args.fps_cap,
        skim_max_frames: args.skim_max_frames,
        clip_max_frames: args.clip_max_frames,
        ..Default::default()
    };
    sampling.validate().map_err(anyhow::Error::msg)?;
    let cfg = RolloutConfig {
        t_max: args.t_max,
        sampling,
        ..RolloutConfig::default()
    };

    // One derived seed per (instance, group member); output order matches.
    let g = args.group_size;
    let jobs = args.jobs;
    let outcomes: Vec<Result<Trajectory, RolloutError>> = exec::with_jobs(jobs, || {
        exec::map_indices(instances.len() * g, |flat| {
            let (i, k) = (flat / g, flat % g);
            let inst = &instances[i];
            let seed = exec::derive_seed(args.seed, flat as u64);
            run_rollout(&*policy, &inst.meta, &inst.question(), &cfg, seed).map(|mut t| {
                t.group_id = Some(inst.meta.id().to_string());
                let _ = k;
                t
            })
        })
    });

    let mut trajectories = Vec::new();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut transport_failures = 0usize;
    let mut other_failures = 0usize;
    for (flat, outcome) in outcomes.into_iter().enumerate() {
        let (i, k) = (flat / g, flat % g);
        match outcome {
            Ok(t) => {
                let record_id = if g > 1 {
                    format!("{}#{k}", instances[i].meta.id())
                } else {
                    instances[i].meta.id().to_string()
                };
                preds.push(EvalRecord::from_trajectory(record_id, &t));
                trajectories.push(t);
            }
            Err(RolloutError::PolicyFailure { source, .. }) => {
                if matches!(source, PolicyError::Transport(_)) {
                    transport_failures += 1;
                } else {
                    other_failures += 1;
                }
                log::warn!("rollout failed on {}: {source}", instances[i].meta.id());
            }
            Err(e) => {
                other_failures += 1;
                log::warn!("rollout failed on {}: {e}", instances[i].meta.id());
            }
        }
    }

    let lines: Vec<String> = trajectories.iter().map(encode_trajectory).collect();
    io::write_lines(&args.output, &lines)?;

    if let Some(path) = &args.pred_out {
        let pred_lines: Vec<String> = preds
            .iter()
            .map(|r| {
                serde_json::json!({
                    "id": r.id,
                    "pred_interval": r.pred_interval,
                    "pred_answer": r.pred_answer,
                    "clip_count": r.clip_count,
                })
                .to_string()
            })
            .collect();
        io::write_lines(path, &pred_lines)?;
    }
    if let Some(path) = &args.gt_out {
        for r in &preds {
            gts.push(
                serde_json::json!({
                    "id": r.id,
                    "duration_s": r.duration_s,
                    "task": r.task,
                    "gt_interval": r.gt_interval,
                    "gt_answer": r.gt_answer,
                })
                .to_string(),
            );
        }
        io::write_lines(path, &gts)?;
    }

    let stats = StatsOut {
        instances: instances.len(),
        trajectories: trajectories.len(),
        failures: transport_failures + other_failures,
        toolcalls: toolcall_behavior(&trajectories),
    };
    let stats_json = serde_json::to_string_pretty(&stats)?;
    println!("{stats_json}");
    if let Some(path) = &args.stats {
        std::fs::write(path, format!("{stats_json}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }

    if transport_failures > 0 {
        eprintln!("error: {transport_failures} rollout(s) failed on transport");
        return Ok(EXIT_TRANSPORT);
    }
    if other_failures > 0 {
        return Ok(crate::commands::EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}
