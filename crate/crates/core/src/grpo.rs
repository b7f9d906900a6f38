//! Group-relative advantage normalization and the KL/objective bookkeeping a
//! trainer would consume.
//!
//! No policy update happens here; the module produces the per-token
//! quantities (normalized advantages, KL estimates, objective terms) and an
//! exportable record per group.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEGENERATE_STD: f64 = 1e-8;
const KL_DELTA_CLIP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group too small: need at least 2 trajectories, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite reward in group")]
    NonFiniteReward,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("token counts must be positive")]
    EmptyTrajectoryTokens,
}

/// Normalized advantages for one group of trajectories sharing a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub per_trajectory: Vec<f64>,
    /// True when the group was reward-degenerate (std below 1e-8) and all
    /// advantages were zeroed instead of dividing by ~0.
    pub epsilon_used: bool,
}

/// One current/reference log-probability pair for a single token.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbPair {
    pub logp_current: f64,
    pub logp_reference: f64,
}

/// Normalizes rewards within the group: `(r - mean) / std` with the
/// population standard deviation. Degenerate groups yield zeros.
pub fn group_advantages(rewards: &[f64]) -> Result<GroupAdvantages, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward);
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return Ok(GroupAdvantages {
            per_trajectory: vec![0.0; rewards.len()],
            epsilon_used: true,
        });
    }
    Ok(GroupAdvantages {
        per_trajectory: rewards.iter().map(|r| (r - mean) / std).collect(),
        epsilon_used: false,
    })
}

/// Repeats each trajectory's advantage across its tokens: trajectory `i`
/// contributes `token_counts[i]` copies.
pub fn broadcast_token_advantages(
    adv: &GroupAdvantages,
    token_counts: &[usize],
) -> Result<Vec<Vec<f64>>, GrpoError> {
    if adv.per_trajectory.len() != token_counts.len() {
        return Err(GrpoError::ShapeMismatch(
            "advantages and token counts differ in length",
        ));
    }
    if token_counts.contains(&0) {
        return Err(GrpoError::EmptyTrajectoryTokens);
    }
    Ok(adv
        .per_trajectory
        .iter()
        .zip(token_counts)
        .map(|(&a, &c)| vec![a; c])
        .collect())
}

/// Per-token KL estimate `exp(d) - d - 1` with `d = logp_ref - logp_current`,
/// the nonnegative estimator. `d` is clipped to ±20 before exponentiation.
pub fn kl_estimate(pairs: &[TokenLogProbPair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| {
            let delta = (p.logp_reference - p.logp_current).clamp(-KL_DELTA_CLIP, KL_DELTA_CLIP);
            delta.exp() - delta - 1.0
        })
        .collect()
}

/// Per-token objective contributions and their token-normalized sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerms {
    pub per_token: Vec<Vec<f64>>,
    pub scalar: f64,
}

/// Computes `a - beta * kl` per token and the sum divided by the total token
/// count across the group.
pub fn objective_terms(
    adv_tokens: &[Vec<f64>],
    kl_tokens: &[Vec<f64>],
    beta: f64,
) -> Result<ObjectiveTerms, GrpoError> {
    if adv_tokens.len() != kl_tokens.len() {
        return Err(GrpoError::ShapeMismatch("trajectory counts differ"));
    }
    let mut per_token = Vec::with_capacity(adv_tokens.len());
    let mut sum = 0.0;
    let mut total_tokens = 0usize;
    for (a_row, k_row) in adv_tokens.iter().zip(kl_tokens) {
        if a_row.len() != k_row.len() {
            return Err(GrpoError::ShapeMismatch("token counts differ"));
        }
        let row: Vec<f64> = a_row
            .iter()
            .zip(k_row)
            .map(|(a, k)| a - beta * k)
            .collect();
        sum += row.iter().sum::<f64>();
        total_tokens += row.len();
        per_token.push(row);
    }
    if total_tokens == 0 {
        return Err(GrpoError::EmptyTrajectoryTokens);
    }
    Ok(ObjectiveTerms {
        per_token,
        scalar: sum / total_tokens as f64,
    })
}

/// One line of the advantage export JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    pub group_id: String,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub epsilon_used: bool,
}

impl AdvantageRecord {
    pub fn from_rewards(group_id: impl Into<String>, rewards: Vec<f64>) -> Result<Self, GrpoError> {
        let adv = group_advantages(&rewards)?;
        Ok(Self {
            group_id: group_id.into(),
            rewards,
            advantages: adv.per_trajectory,
            epsilon_used: adv.epsilon_used,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_element_group_normalizes_to_plus_minus_one() {
        let adv = group_advantages(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(adv.per_trajectory[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(adv.per_trajectory[1], -1.0, epsilon = 1e-12);
        assert!(!adv.epsilon_used);
    }

    #[test]
    fn constant_group_takes_the_degenerate_branch() {
        let adv = group_advantages(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(adv.per_trajectory, vec![0.0, 0.0, 0.0]);
        assert!(adv.epsilon_used);
    }

    #[test]
    fn three_element_group_uses_population_std() {
        // mean 1, population std sqrt(2/3).
        let adv = group_advantages(&[2.0, 0.0, 1.0]).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert_abs_diff_eq!(adv.per_trajectory[0], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(adv.per_trajectory[0], 1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(adv.per_trajectory[1], -expected, epsilon = 1e-12);
        assert_abs_diff_eq!(adv.per_trajectory[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn group_too_small() {
        assert!(matches!(
            group_advantages(&[1.0]),
            Err(GrpoError::GroupTooSmall(1))
        ));
    }

    #[test]
    fn broadcast_shapes() {
        let adv = group_advantages(&[1.0, 0.0]).unwrap();
        let rows = broadcast_token_advantages(&adv, &[3, 2]).unwrap();
        assert_eq!(rows, vec![vec![1.0, 1.0, 1.0], vec![-1.0, -1.0]]);
        assert!(broadcast_token_advantages(&adv, &[3]).is_err());
        assert!(broadcast_token_advantages(&adv, &[3, 0]).is_err());
    }

    #[test]
    fn kl_closed_form_points() {
        let pair = |cur: f64, re: f64| TokenLogProbPair {
            logp_current: cur,
            logp_reference: re,
        };
        let kl = kl_estimate(&[
            pair(-1.0, -1.0),
            pair(-1.0, -1.0 + std::f64::consts::LN_2),
            pair(-1.0, -1.0 - std::f64::consts::LN_2),
        ]);
        assert_abs_diff_eq!(kl[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kl[1], 2.0 - std::f64::consts::LN_2 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(kl[2], 0.5 + std::f64::consts::LN_2 - 1.0, epsilon = 1e-12);
        // Clipping keeps extreme deltas finite.
        let kl = kl_estimate(&[pair(-1000.0, 0.0)]);
        assert!(kl[0].is_finite());
    }

    #[test]
    fn objective_term_examples() {
        let t = objective_terms(&[vec![1.0]], &[vec![0.0]], 0.1).unwrap();
        assert_abs_diff_eq!(t.scalar, 1.0, epsilon = 1e-15);

        let kl = 2.0 - std::f64::consts::LN_2 - 1.0;
        let t = objective_terms(&[vec![1.0], vec![-1.0]], &[vec![kl], vec![0.0]], 1.0).unwrap();
        assert_abs_diff_eq!(t.scalar, (1.0 - kl - 1.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.scalar, -0.153426409720027, epsilon = 1e-12);

        // beta = 0 reduces to the token-weighted mean advantage.
        let t = objective_terms(&[vec![1.0, 1.0], vec![-1.0]], &[vec![9.0, 9.0], vec![9.0]], 0.0)
            .unwrap();
        assert_abs_diff_eq!(t.scalar, 1.0 / 3.0, epsilon = 1e-15);

        assert!(objective_terms(&[vec![1.0]], &[vec![0.0, 0.0]], 0.0).is_err());
    }
}
