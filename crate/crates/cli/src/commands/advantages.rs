//! `clipgrounder advantages`: group reward lines by a key field and
//! normalize each group, emitting one advantage record per group in
//! first-appearance order.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use clipgrounder_core::grpo::AdvantageRecord;

use crate::commands::{EXIT_OK, EXIT_PARTIAL};
use crate::io;

#[derive(Args)]
pub struct AdvantagesArgs {
    /// Rewards JSONL; each line needs the group key and a "total" value.
    #[arg(long)]
    pub input: PathBuf,
    /// Field carrying the group id.
    #[arg(long, default_value = "group_id")]
    pub group_key: String,
    /// KL coefficient for the objective summary printed to stdout.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Output advantages JSONL.
    #[arg(long)]
    pub output: PathBuf,
}

pub fn run(args: AdvantagesArgs) -> anyhow::Result<i32> {
    let lines = io::read_lines(&args.input)?;
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines.iter().enumerate() {
        let value: serde_json::Value =
            serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        let group = value
            .get(&args.group_key)
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .filter(|_| !value[&args.group_key].is_null())
            .with_context(|| format!("line {}: missing group key {:?}", i + 1, args.group_key))?;
        let reward = value
            .get("total")
            .and_then(|v| v.as_f64())
            .with_context(|| format!("line {}: missing numeric \"total\"", i + 1))?;
        if !groups.contains_key(&group) {
            order.push(group.clone());
        }
        groups.entry(group).or_default().push(reward);
    }

    let mut out = Vec::new();
    let mut failures = 0usize;
    let mut epsilon_groups = 0usize;
    for group_id in &order {
        let rewards = groups.remove(group_id).expect("group collected");
        match AdvantageRecord::from_rewards(group_id.clone(), rewards) {
            Ok(record) => {
                if record.epsilon_used {
                    epsilon_groups += 1;
                }
                out.push(serde_json::to_string(&record).expect("record serializes"));
            }
            Err(e) => {
                failures += 1;
                out.push(
                    serde_json::json!({"group_id": group_id, "error": e.to_string()}).to_string(),
                );
            }
        }
    }
    io::write_lines(&args.output, &out)?;

    // The objective summary: with no per-token KL data in the file, the
    // beta term contributes nothing and this is the mean advantage (zero
    // for complete groups by construction).
    println!(
        "{}",
        serde_json::json!({
            "groups": order.len(),
            "epsilon_groups": epsilon_groups,
            "beta": args.beta,
        })
    );
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}
