//! The unified SFT supervision mask: only the final two assistant turns are
//! trained; everything earlier, and all non-assistant content, is masked.
//!
//! Earlier turns of multi-tool-call data typically carry imprecise intervals,
//! so supervising them would inject noise into the loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// One message's token span within the flattened sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSpan {
    pub role: Role,
    pub start: usize,
    pub len: usize,
    /// Ordinal among assistant messages; absent for non-assistant roles and
    /// derived from order when not provided.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
}

/// Per-span supervision flags, aligned with the span list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionMask(pub Vec<bool>);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("no assistant spans to supervise")]
    NoAssistantSpans,
    #[error("spans must be ordered, disjoint, and non-empty (span {0})")]
    BadSpanLayout(usize),
    #[error("mask and span list are misaligned")]
    Misaligned,
}

fn check_layout(spans: &[MessageSpan]) -> Result<(), MaskError> {
    let mut cursor = 0usize;
    for (i, s) in spans.iter().enumerate() {
        if s.len == 0 || s.start < cursor {
            return Err(MaskError::BadSpanLayout(i));
        }
        cursor = s.start + s.len;
    }
    Ok(())
}

/// Marks the assistant spans with the two highest turn ordinals as
/// supervised; every other span is masked. A single assistant turn is fully
/// supervised (the rule's natural restriction to single-turn data).
pub fn unified_mask(spans: &[MessageSpan]) -> Result<SupervisionMask, MaskError> {
    check_layout(spans)?;
    let assistant_positions: Vec<usize> = spans
        .iter()
        .enumerate()
        .filter(|(_, s)| s.role == Role::Assistant)
        .map(|(i, _)| i)
        .collect();
    if assistant_positions.is_empty() {
        return Err(MaskError::NoAssistantSpans);
    }
    // Order assistant spans by turn_index when provided, by position otherwise.
    let mut ordered = assistant_positions.clone();
    ordered.sort_by_key(|&i| (spans[i].turn_index.unwrap_or(assistant_rank(spans, i)), i));
    let supervised: Vec<usize> = ordered.iter().rev().take(2).copied().collect();
    let mut mask = vec![false; spans.len()];
    for i in supervised {
        mask[i] = true;
    }
    Ok(SupervisionMask(mask))
}

fn assistant_rank(spans: &[MessageSpan], position: usize) -> usize {
    spans[..position]
        .iter()
        .filter(|s| s.role == Role::Assistant)
        .count()
}

/// Sums supervised and masked token counts; the two always add up to the
/// total span length.
pub fn masked_token_count(
    mask: &SupervisionMask,
    spans: &[MessageSpan],
) -> Result<(usize, usize), MaskError> {
    if mask.0.len() != spans.len() {
        return Err(MaskError::Misaligned);
    }
    let mut supervised = 0usize;
    let mut masked = 0usize;
    for (flag, span) in mask.0.iter().zip(spans) {
        if *flag {
            supervised += span.len;
        } else {
            masked += span.len;
        }
    }
    Ok((supervised, masked))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(role: Role, start: usize, len: usize) -> MessageSpan {
        MessageSpan {
            role,
            start,
            len,
            turn_index: None,
        }
    }

    fn dialogue(assistant_turns: usize) -> Vec<MessageSpan> {
        let mut spans = vec![span(Role::System, 0, 4)];
        let mut cursor = 4;
        for _ in 0..assistant_turns {
            spans.push(span(Role::User, cursor, 5));
            cursor += 5;
            spans.push(span(Role::Assistant, cursor, 7));
            cursor += 7;
            spans.push(span(Role::Tool, cursor, 3));
            cursor += 3;
        }
        spans
    }

    fn assistant_flags(spans: &[MessageSpan], mask: &SupervisionMask) -> Vec<bool> {
        spans
            .iter()
            .zip(&mask.0)
            .filter(|(s, _)| s.role == Role::Assistant)
            .map(|(_, &f)| f)
            .collect()
    }

    #[test]
    fn three_turns_supervise_the_last_two() {
        let spans = dialogue(3);
        let mask = unified_mask(&spans).unwrap();
        assert_eq!(assistant_flags(&spans, &mask), vec![false, true, true]);
        // Non-assistant spans stay masked.
        for (s, &f) in spans.iter().zip(&mask.0) {
            if s.role != Role::Assistant {
                assert!(!f);
            }
        }
    }

    #[test]
    fn single_turn_is_fully_supervised() {
        let spans = dialogue(1);
        let mask = unified_mask(&spans).unwrap();
        assert_eq!(assistant_flags(&spans, &mask), vec![true]);
    }

    #[test]
    fn exactly_two_turns_both_supervised() {
        let spans = dialogue(2);
        let mask = unified_mask(&spans).unwrap();
        assert_eq!(assistant_flags(&spans, &mask), vec![true, true]);
    }

    #[test]
    fn no_assistant_spans_is_an_error() {
        let spans = vec![span(Role::User, 0, 5)];
        assert_eq!(unified_mask(&spans), Err(MaskError::NoAssistantSpans));
    }

    #[test]
    fn token_counts() {
        // user 5, assistant 7, user 4, assistant 6: both turns supervised.
        let spans = vec![
            span(Role::User, 0, 5),
            span(Role::Assistant, 5, 7),
            span(Role::User, 12, 4),
            span(Role::Assistant, 16, 6),
        ];
        let mask = unified_mask(&spans).unwrap();
        assert_eq!(masked_token_count(&mask, &spans).unwrap(), (13, 9));

        let all_masked = SupervisionMask(vec![false; spans.len()]);
        assert_eq!(masked_token_count(&all_masked, &spans).unwrap(), (0, 22));

        let spans3 = dialogue(3);
        let mask3 = unified_mask(&spans3).unwrap();
        let (supervised, masked) = masked_token_count(&mask3, &spans3).unwrap();
        assert_eq!(supervised, 14); // two assistant spans of 7
        assert_eq!(supervised + masked, 4 + 3 * 15);
    }

    #[test]
    fn appending_a_turn_moves_supervision_forward() {
        let spans3 = dialogue(3);
        let mask3 = unified_mask(&spans3).unwrap();
        let spans4 = dialogue(4);
        let mask4 = unified_mask(&spans4).unwrap();
        let flags3 = assistant_flags(&spans3, &mask3);
        let flags4 = assistant_flags(&spans4, &mask4);
        assert_eq!(flags3, vec![false, true, true]);
        assert_eq!(flags4, vec![false, false, true, true]);
    }

    #[test]
    fn overlapping_spans_rejected() {
        let spans = vec![span(Role::User, 0, 5), span(Role::Assistant, 3, 4)];
        assert_eq!(unified_mask(&spans), Err(MaskError::BadSpanLayout(1)));
    }
}
