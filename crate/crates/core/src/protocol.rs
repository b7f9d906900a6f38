//! The tagged assistant-message wire format.
//!
//! A message is: optional whitespace, one `<think>...</think>` block, then
//! exactly one of `<tool_call>...</tool_call>` (a JSON `video_clip` payload)
//! or `<answer>...</answer>`, then optional whitespace. Whitespace between
//! blocks is insignificant; content inside think/answer is preserved
//! verbatim. The grammar is regular: there is no escaping layer, and answer
//! or think text containing a literal close tag is rejected at render time.

use serde::Serialize;
use thiserror::Error;

use crate::types::{Action, AssistantTurn, TemporalInterval, Termination, Trajectory};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const TOOL_NAME: &str = "video_clip";
pub const ARG_START_TIME: &str = "start_time";
pub const ARG_END_TIME: &str = "end_time";

/// A parse rejection: what went wrong and the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{reason} at byte {position}")]
pub struct ParseFailure {
    pub reason: String,
    pub position: usize,
}

impl ParseFailure {
    fn new(reason: &str, position: usize) -> Self {
        Self {
            reason: reason.to_string(),
            position,
        }
    }
}

/// Error raised when a turn cannot be rendered in the wire grammar.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("think text contains the literal think close tag")]
    ThinkContainsCloseTag,
    #[error("answer text contains the literal answer close tag")]
    AnswerContainsCloseTag,
    #[error("answer text matches the interval answer syntax and would not round-trip")]
    AnswerLooksLikeInterval,
}

fn skip_ws(s: &str, mut pos: usize) -> usize {
    let bytes = s.as_bytes();
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}

fn find_from(s: &str, needle: &str, from: usize) -> Option<usize> {
    s[from..].find(needle).map(|i| from + i)
}

/// Parses the `[a, b]` interval answer syntax. Returns the raw numbers so the
/// caller can distinguish malformed syntax from an invalid interval.
pub(crate) fn parse_interval_literal(s: &str) -> Option<(f64, f64)> {
    let t = s.trim();
    let inner = t.strip_prefix('[')?.strip_suffix(']')?;
    let mut parts = inner.splitn(2, ',');
    let a = parts.next()?.trim().parse::<f64>().ok()?;
    let b = parts.next()?.trim().parse::<f64>().ok()?;
    Some((a, b))
}

fn parse_tool_payload(content: &str, content_pos: usize) -> Result<Action, ParseFailure> {
    let value: serde_json::Value = serde_json::from_str(content.trim())
        .map_err(|_| ParseFailure::new("malformed tool json", content_pos))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ParseFailure::new("malformed tool json", content_pos))?;
    let name = obj
        .get("name")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ParseFailure::new("malformed tool json", content_pos))?;
    if name != TOOL_NAME {
        return Err(ParseFailure::new("unknown tool name", content_pos));
    }
    let args = obj
        .get("arguments")
        .and_then(|v| v.as_object())
        .ok_or_else(|| ParseFailure::new("malformed tool json", content_pos))?;
    let get_time = |key: &str| -> Result<f64, ParseFailure> {
        match args.get(key) {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| ParseFailure::new("non-numeric time", content_pos)),
            None => Err(ParseFailure::new("non-numeric time", content_pos)),
        }
    };
    let start = get_time(ARG_START_TIME)?;
    let end = get_time(ARG_END_TIME)?;
    let interval = TemporalInterval::new(start, end)
        .map_err(|_| ParseFailure::new("invalid clip interval", content_pos))?;
    Ok(Action::Clip { interval })
}

/// Parses one raw assistant message into a turn.
///
/// Accepts exactly one think block followed by exactly one tool_call or
/// answer block; anything else is a positioned [`ParseFailure`]. An answer
/// whose content matches the `[a, b]` interval syntax becomes an
/// `AnswerInterval` (grounding tasks request that syntax).
pub fn parse_assistant(raw: &str) -> Result<AssistantTurn, ParseFailure> {
    let mut pos = skip_ws(raw, 0);
    if !raw[pos..].starts_with(THINK_OPEN) {
        return Err(ParseFailure::new("missing think block", pos));
    }
    let think_start = pos + THINK_OPEN.len();
    let think_end = find_from(raw, THINK_CLOSE, think_start)
        .ok_or_else(|| ParseFailure::new("unterminated think block", pos))?;
    let think = &raw[think_start..think_end];
    pos = skip_ws(raw, think_end + THINK_CLOSE.len());

    let action = if raw[pos..].starts_with(TOOL_CALL_OPEN) {
        let content_start = pos + TOOL_CALL_OPEN.len();
        let content_end = find_from(raw, TOOL_CALL_CLOSE, content_start)
            .ok_or_else(|| ParseFailure::new("unterminated tool_call block", pos))?;
        let action = parse_tool_payload(&raw[content_start..content_end], content_start)?;
        pos = content_end + TOOL_CALL_CLOSE.len();
        action
    } else if raw[pos..].starts_with(ANSWER_OPEN) {
        let content_start = pos + ANSWER_OPEN.len();
        let content_end = find_from(raw, ANSWER_CLOSE, content_start)
            .ok_or_else(|| ParseFailure::new("unterminated answer block", pos))?;
        let content = &raw[content_start..content_end];
        let action = match parse_interval_literal(content) {
            Some((a, b)) => {
                let interval = TemporalInterval::new(a, b)
                    .map_err(|_| ParseFailure::new("invalid answer interval", content_start))?;
                Action::AnswerInterval { interval }
            }
            None => Action::AnswerText {
                text: content.to_string(),
            },
        };
        pos = content_end + ANSWER_CLOSE.len();
        action
    } else if raw[pos..].starts_with(THINK_OPEN) {
        return Err(ParseFailure::new("duplicate think block", pos));
    } else {
        return Err(ParseFailure::new("missing action block", pos));
    };

    let tail = skip_ws(raw, pos);
    if tail != raw.len() {
        return Err(ParseFailure::new("trailing content after final block", tail));
    }
    Ok(AssistantTurn {
        think: think.to_string(),
        action,
        raw_text: raw.to_string(),
    })
}

/// Formats seconds the way the canonical wire form expects: integral values
/// carry one decimal place, everything else uses the shortest round-trip form.
pub(crate) fn fmt_seconds(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

#[derive(Serialize)]
struct ToolArgsWire {
    start_time: f64,
    end_time: f64,
}

#[derive(Serialize)]
struct ToolCallWire<'a> {
    name: &'a str,
    arguments: ToolArgsWire,
}

/// Renders `(think, action)` into the canonical two-block wire form.
pub fn render_assistant_parts(think: &str, action: &Action) -> Result<String, RenderError> {
    if think.contains(THINK_CLOSE) {
        return Err(RenderError::ThinkContainsCloseTag);
    }
    let body = match action {
        Action::Clip { interval } => {
            let payload = serde_json::to_string(&ToolCallWire {
                name: TOOL_NAME,
                arguments: ToolArgsWire {
                    start_time: interval.start_s(),
                    end_time: interval.end_s(),
                },
            })
            .expect("tool payload serializes");
            format!("{TOOL_CALL_OPEN}{payload}{TOOL_CALL_CLOSE}")
        }
        Action::AnswerText { text } => {
            if text.contains(ANSWER_CLOSE) {
                return Err(RenderError::AnswerContainsCloseTag);
            }
            if parse_interval_literal(text).is_some() {
                return Err(RenderError::AnswerLooksLikeInterval);
            }
            format!("{ANSWER_OPEN}{text}{ANSWER_CLOSE}")
        }
        Action::AnswerInterval { interval } => format!(
            "{ANSWER_OPEN}[{}, {}]{ANSWER_CLOSE}",
            fmt_seconds(interval.start_s()),
            fmt_seconds(interval.end_s())
        ),
    };
    Ok(format!("{THINK_OPEN}{think}{THINK_CLOSE}\n{body}"))
}

/// Canonical serialization of a turn; `parse_assistant(render_assistant(x))`
/// recovers `x` up to the raw text.
pub fn render_assistant(turn: &AssistantTurn) -> Result<String, RenderError> {
    render_assistant_parts(&turn.think, &turn.action)
}

/// Judges whether a whole trajectory follows the required format: every raw
/// message parses, every non-final turn is a clip, and the final turn is an
/// answer. A trajectory truncated at the turn cap without an answer does not
/// qualify.
pub fn format_valid(t: &Trajectory) -> bool {
    let n = t.steps.len();
    if n == 0 {
        return false;
    }
    if t.terminated_by == Termination::MaxTurns {
        return false;
    }
    for (i, step) in t.steps.iter().enumerate() {
        let turn = match parse_assistant(step.turn.raw_text()) {
            Ok(turn) => turn,
            Err(_) => return false,
        };
        let last = i + 1 == n;
        if last {
            if !turn.action.is_answer() {
                return false;
            }
        } else if !turn.action.is_clip() {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Question, Step, VideoMeta};

    fn iv(a: f64, b: f64) -> TemporalInterval {
        TemporalInterval::new(a, b).unwrap()
    }

    #[test]
    fn parses_clip_message() {
        let raw = "<think>scan</think>\n<tool_call>{\"name\":\"video_clip\",\"arguments\":{\"start_time\":12.0,\"end_time\":34.5}}</tool_call>";
        let turn = parse_assistant(raw).unwrap();
        assert_eq!(turn.think, "scan");
        assert_eq!(turn.action, Action::Clip { interval: iv(12.0, 34.5) });
    }

    #[test]
    fn parses_minimal_answer() {
        let turn = parse_assistant("<think>done</think><answer>B</answer>").unwrap();
        assert_eq!(turn.action, Action::AnswerText { text: "B".into() });
    }

    #[test]
    fn missing_think_block_fails_at_position_zero() {
        let err = parse_assistant("<answer>B</answer>").unwrap_err();
        assert_eq!(err.reason, "missing think block");
        assert_eq!(err.position, 0);
    }

    #[test]
    fn interval_answer_syntax_becomes_answer_interval() {
        let turn = parse_assistant("<think>t</think><answer>[3.5, 9.0]</answer>").unwrap();
        assert_eq!(
            turn.action,
            Action::AnswerInterval { interval: iv(3.5, 9.0) }
        );
        // Integers normalize to decimals on render.
        let turn = parse_assistant("<think>t</think><answer>[3, 9]</answer>").unwrap();
        let rendered = render_assistant(&turn).unwrap();
        assert_eq!(rendered, "<think>t</think>\n<answer>[3.0, 9.0]</answer>");
    }

    #[test]
    fn reversed_or_negative_intervals_are_rejected() {
        let err = parse_assistant("<think>t</think><answer>[9, 3]</answer>").unwrap_err();
        assert_eq!(err.reason, "invalid answer interval");
        let err = parse_assistant(
            "<think>t</think><tool_call>{\"name\":\"video_clip\",\"arguments\":{\"start_time\":9,\"end_time\":3}}</tool_call>",
        )
        .unwrap_err();
        assert_eq!(err.reason, "invalid clip interval");
    }

    #[test]
    fn unknown_tool_and_bad_json_fail_with_positions() {
        let err = parse_assistant(
            "<think>t</think><tool_call>{\"name\":\"zoom\",\"arguments\":{\"start_time\":1,\"end_time\":2}}</tool_call>",
        )
        .unwrap_err();
        assert_eq!(err.reason, "unknown tool name");
        let err =
            parse_assistant("<think>t</think><tool_call>{not json}</tool_call>").unwrap_err();
        assert_eq!(err.reason, "malformed tool json");
        let err = parse_assistant(
            "<think>t</think><tool_call>{\"name\":\"video_clip\",\"arguments\":{\"start_time\":\"x\",\"end_time\":2}}</tool_call>",
        )
        .unwrap_err();
        assert_eq!(err.reason, "non-numeric time");
    }

    #[test]
    fn trailing_content_and_duplicate_blocks_rejected() {
        let err =
            parse_assistant("<think>t</think><answer>A</answer><answer>B</answer>").unwrap_err();
        assert_eq!(err.reason, "trailing content after final block");
        assert_eq!(err.position, "<think>t</think><answer>A</answer>".len());
        let err = parse_assistant("<think>t</think><answer>A</answer> x").unwrap_err();
        assert_eq!(err.reason, "trailing content after final block");
    }

    #[test]
    fn whitespace_between_blocks_is_insignificant() {
        let a = parse_assistant("<think>t</think>\n\n  <answer> B </answer>\n").unwrap();
        assert_eq!(a.think, "t");
        // Inside the answer block, whitespace is preserved verbatim.
        assert_eq!(a.action, Action::AnswerText { text: " B ".into() });
    }

    #[test]
    fn render_rejects_unrepresentable_text() {
        assert_eq!(
            render_assistant_parts("a</think>b", &Action::AnswerText { text: "B".into() }),
            Err(RenderError::ThinkContainsCloseTag)
        );
        assert_eq!(
            render_assistant_parts("t", &Action::AnswerText { text: "x</answer>y".into() }),
            Err(RenderError::AnswerContainsCloseTag)
        );
        assert_eq!(
            render_assistant_parts("t", &Action::AnswerText { text: "[3, 4]".into() }),
            Err(RenderError::AnswerLooksLikeInterval)
        );
    }

    #[test]
    fn render_then_parse_recovers_the_turn() {
        let action = Action::Clip { interval: iv(0.0, 5.0) };
        let raw = render_assistant_parts("t", &action).unwrap();
        let back = parse_assistant(&raw).unwrap();
        assert_eq!(back.think, "t");
        assert_eq!(back.action, action);
    }

    fn mini_trajectory(raws: Vec<&str>, terminated_by: Termination) -> Trajectory {
        let steps = raws
            .iter()
            .map(|raw| match parse_assistant(raw) {
                Ok(turn) => Step::parsed(turn, None),
                Err(e) => Step {
                    turn: crate::types::TurnBody::Malformed {
                        raw_text: raw.to_string(),
                        reason: e.reason,
                    },
                    observation: None,
                    clip_error: None,
                },
            })
            .collect();
        Trajectory {
            video: VideoMeta::new("v", 600.0, None).unwrap(),
            question: Question::videoqa("q"),
            steps,
            terminated_by,
            group_id: None,
        }
    }

    #[test]
    fn format_valid_cases() {
        let clip = "<think>a</think><tool_call>{\"name\":\"video_clip\",\"arguments\":{\"start_time\":1.0,\"end_time\":2.0}}</tool_call>";
        let answer = "<think>b</think><answer>B</answer>";
        assert!(format_valid(&mini_trajectory(
            vec![clip, answer],
            Termination::Answer
        )));
        assert!(!format_valid(&mini_trajectory(
            vec!["<oops>", answer],
            Termination::Answer
        )));
        // Truncated at the turn cap without an answer: no format reward.
        assert!(!format_valid(&mini_trajectory(
            vec![clip, clip, clip],
            Termination::MaxTurns
        )));
        // Answer anywhere but the final turn breaks the format.
        assert!(!format_valid(&mini_trajectory(
            vec![answer, answer],
            Termination::Answer
        )));
    }
}
