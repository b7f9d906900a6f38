//! The trajectory JSONL wire schema: one trajectory per line.
//!
//! Field names are the contract. In strict mode unknown fields anywhere in a
//! line are rejected with their paths; in lenient mode they are ignored.
//! Assistant raw text is not stored: parsed turns re-render canonically on
//! decode, and malformed turns keep their raw text under the `malformed`
//! action type.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::render_assistant_parts;
use crate::types::{
    Action, AssistantTurn, Observation, Question, Step, Termination, Trajectory, TurnBody,
    VideoMeta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemaMode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown fields: {}", .0.join(", "))]
    UnknownFields(Vec<String>),
    #[error("turn {turn} cannot be rendered in the wire grammar: {reason}")]
    Unrenderable { turn: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryWire {
    video: VideoMeta,
    question: Question,
    steps: Vec<StepWire>,
    terminated_by: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepWire {
    think: String,
    action: ActionWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observation: Option<Observation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip_error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ActionWire {
    Clip { interval: crate::types::TemporalInterval },
    AnswerText { text: String },
    AnswerInterval { interval: crate::types::TemporalInterval },
    /// A turn whose raw text failed to parse; kept for diagnostics.
    Malformed { raw: String, reason: String },
}

fn to_wire(t: &Trajectory) -> TrajectoryWire {
    let steps = t
        .steps
        .iter()
        .map(|s| {
            let (think, action) = match &s.turn {
                TurnBody::Parsed(turn) => (
                    turn.think.clone(),
                    match &turn.action {
                        Action::Clip { interval } => ActionWire::Clip { interval: *interval },
                        Action::AnswerText { text } => {
                            ActionWire::AnswerText { text: text.clone() }
                        }
                        Action::AnswerInterval { interval } => {
                            ActionWire::AnswerInterval { interval: *interval }
                        }
                    },
                ),
                TurnBody::Malformed { raw_text, reason } => (
                    String::new(),
                    ActionWire::Malformed {
                        raw: raw_text.clone(),
                        reason: reason.clone(),
                    },
                ),
            };
            StepWire {
                think,
                action,
                observation: s.observation.clone(),
                clip_error: s.clip_error.clone(),
            }
        })
        .collect();
    TrajectoryWire {
        video: t.video.clone(),
        question: t.question.clone(),
        steps,
        terminated_by: t.terminated_by,
        group_id: t.group_id.clone(),
    }
}

fn from_wire(w: TrajectoryWire) -> Result<Trajectory, DecodeError> {
    let mut steps = Vec::with_capacity(w.steps.len());
    for (i, s) in w.steps.into_iter().enumerate() {
        let turn = match s.action {
            ActionWire::Malformed { raw, reason } => TurnBody::Malformed {
                raw_text: raw,
                reason,
            },
            other => {
                let action = match other {
                    ActionWire::Clip { interval } => Action::Clip { interval },
                    ActionWire::AnswerText { text } => Action::AnswerText { text },
                    ActionWire::AnswerInterval { interval } => Action::AnswerInterval { interval },
                    ActionWire::Malformed { .. } => unreachable!("handled above"),
                };
                let raw_text = render_assistant_parts(&s.think, &action).map_err(|e| {
                    DecodeError::Unrenderable {
                        turn: i,
                        reason: e.to_string(),
                    }
                })?;
                TurnBody::Parsed(AssistantTurn {
                    think: s.think,
                    action,
                    raw_text,
                })
            }
        };
        steps.push(Step {
            turn,
            observation: s.observation,
            clip_error: s.clip_error,
        });
    }
    Ok(Trajectory {
        video: w.video,
        question: w.question,
        steps,
        terminated_by: w.terminated_by,
        group_id: w.group_id,
    })
}

/// Encodes one trajectory as a single JSONL line (no trailing newline).
pub fn encode_trajectory(t: &Trajectory) -> String {
    serde_json::to_string(&to_wire(t)).expect("trajectory serializes")
}

/// Decodes one JSONL line. Strict mode rejects unknown fields anywhere in the
/// document; lenient mode ignores them.
pub fn decode_trajectory(line: &str, mode: SchemaMode) -> Result<Trajectory, DecodeError> {
    if mode == SchemaMode::Strict {
        let value: serde_json::Value = serde_json::from_str(line)?;
        let unknown = unknown_trajectory_fields(&value);
        if !unknown.is_empty() {
            return Err(DecodeError::UnknownFields(unknown));
        }
    }
    let wire: TrajectoryWire = serde_json::from_str(line)?;
    from_wire(wire)
}

fn collect_unknown(
    value: &serde_json::Value,
    allowed: &[&str],
    path: &str,
    out: &mut Vec<String>,
) {
    if let Some(obj) = value.as_object() {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                out.push(format!("{path}{key}"));
            }
        }
    }
}

/// Paths of fields a strict reader does not recognize.
pub fn unknown_trajectory_fields(value: &serde_json::Value) -> Vec<String> {
    let mut out = Vec::new();
    collect_unknown(
        value,
        &[
            "video",
            "question",
            "steps",
            "terminated_by",
            "group_id",
            "curation",
        ],
        "",
        &mut out,
    );
    collect_unknown(
        &value["curation"],
        &["outcome", "retry_used"],
        "curation.",
        &mut out,
    );
    collect_unknown(
        &value["video"],
        &["id", "duration_s", "source_uri"],
        "video.",
        &mut out,
    );
    collect_unknown(
        &value["question"],
        &["text", "task", "choices", "gt_answer", "gt_interval"],
        "question.",
        &mut out,
    );
    if let Some(choices) = value["question"]["choices"].as_array() {
        for (i, c) in choices.iter().enumerate() {
            collect_unknown(c, &["label", "text"], &format!("question.choices[{i}]."), &mut out);
        }
    }
    if let Some(steps) = value["steps"].as_array() {
        for (i, step) in steps.iter().enumerate() {
            let prefix = format!("steps[{i}].");
            collect_unknown(
                step,
                &["think", "action", "observation", "clip_error"],
                &prefix,
                &mut out,
            );
            let action_allowed: &[&str] = match step["action"]["type"].as_str() {
                Some("clip") | Some("answer_interval") => &["type", "interval"],
                Some("answer_text") => &["type", "text"],
                Some("malformed") => &["type", "raw", "reason"],
                _ => &["type", "interval", "text", "raw", "reason"],
            };
            collect_unknown(
                &step["action"],
                action_allowed,
                &format!("{prefix}action."),
                &mut out,
            );
            collect_unknown(
                &step["observation"],
                &["interval", "timestamps"],
                &format!("{prefix}observation."),
                &mut out,
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"video":{"id":"v1","duration_s":600.0},"question":{"text":"q","task":"videoqa","gt_answer":"B"},"steps":[{"think":"look","action":{"type":"clip","interval":[100.0,120.0]},"observation":{"interval":[100.0,120.0],"timestamps":[100.25,100.75]}},{"think":"done","action":{"type":"answer_text","text":"B"}}],"terminated_by":"answer"}"#;

    #[test]
    fn decodes_the_documented_schema() {
        let t = decode_trajectory(LINE, SchemaMode::Strict).unwrap();
        assert_eq!(t.video.id(), "v1");
        assert_eq!(t.turn_count(), 2);
        assert_eq!(t.terminated_by, Termination::Answer);
        // Raw text reparses to (think, action).
        let reparsed = crate::protocol::parse_assistant(t.steps[0].turn.raw_text()).unwrap();
        assert_eq!(Some(&reparsed.action), t.steps[0].turn.action());
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let t = decode_trajectory(LINE, SchemaMode::Strict).unwrap();
        let encoded = encode_trajectory(&t);
        let back = decode_trajectory(&encoded, SchemaMode::Strict).unwrap();
        assert!(t.structurally_eq(&back));
        assert_eq!(encode_trajectory(&back), encoded);
    }

    #[test]
    fn strict_mode_rejects_unknown_fields_lenient_ignores() {
        let line = LINE.replacen("\"think\":\"look\"", "\"think\":\"look\",\"extra\":1", 1);
        match decode_trajectory(&line, SchemaMode::Strict) {
            Err(DecodeError::UnknownFields(fields)) => {
                assert_eq!(fields, vec!["steps[0].extra".to_string()])
            }
            other => panic!("expected unknown-field rejection, got {other:?}"),
        }
        assert!(decode_trajectory(&line, SchemaMode::Lenient).is_ok());
    }

    #[test]
    fn malformed_turns_survive_the_round_trip() {
        let line = r#"{"video":{"id":"v1","duration_s":600.0},"question":{"text":"q","task":"videoqa","gt_answer":"B"},"steps":[{"think":"","action":{"type":"malformed","raw":"<answer>","reason":"missing think block"}}],"terminated_by":"protocol_error"}"#;
        let t = decode_trajectory(line, SchemaMode::Strict).unwrap();
        match &t.steps[0].turn {
            TurnBody::Malformed { raw_text, reason } => {
                assert_eq!(raw_text, "<answer>");
                assert_eq!(reason, "missing think block");
            }
            other => panic!("expected malformed turn, got {other:?}"),
        }
        let back = decode_trajectory(&encode_trajectory(&t), SchemaMode::Strict).unwrap();
        assert!(t.structurally_eq(&back));
    }

    #[test]
    fn reversed_interval_in_schema_is_a_json_error() {
        let line = LINE.replace("[100.0,120.0]", "[120.0,100.0]");
        assert!(matches!(
            decode_trajectory(&line, SchemaMode::Lenient),
            Err(DecodeError::Json(_))
        ));
    }
}
