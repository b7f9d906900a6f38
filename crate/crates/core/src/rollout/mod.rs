//! The agentic loop engine: drives a policy against a video, applying the
//! wire protocol, the clip tool, and the turn-budget termination rules.
//!
//! Policies are abstracted behind [`Policy`]; scripted implementations and a
//! synthetic environment make every piece verifiable at desk scale, and an
//! HTTP client reaches a real model server over the same message contract.

mod http;
mod policies;
mod synthetic;

pub use http::{HttpPolicy, RemoteClient, WireMessage, WirePart};
pub use policies::{
    BlindPolicy, DirectAnswerPolicy, LengthAwarePolicy, NoisyPolicy, OraclePolicy, RefinePolicy,
};
pub use synthetic::{SyntheticVideo, SyntheticWorld};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cliptool::{self, ClipError, SamplingConfig};
use crate::exec;
use crate::protocol::parse_assistant;
use crate::rewards::{score_trajectory, RewardConfig, RewardError};
use crate::types::{
    Action, Observation, Question, Step, Termination, Trajectory, TurnBody, VideoMeta,
};

/// What the engine does when a policy message fails to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseFailurePolicy {
    /// End the trajectory with `protocol_error`.
    Terminate,
    /// Record the malformed turn, send an error note back, and continue.
    /// Keeps groups at full size when one sample misformats.
    ErrorObservationAndContinue,
}

#[derive(Debug, Clone)]
pub struct RolloutConfig {
    pub t_max: usize,
    pub sampling: SamplingConfig,
    pub on_parse_failure: ParseFailurePolicy,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            t_max: 3,
            sampling: SamplingConfig::default(),
            on_parse_failure: ParseFailurePolicy::ErrorObservationAndContinue,
        }
    }
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("policy failed at turn {turn}: {source}")]
    PolicyFailure {
        source: PolicyError,
        turn: usize,
        /// Steps completed before the failure.
        partial: Vec<Step>,
    },
    #[error("group too small: need at least 2, got {0}")]
    GroupTooSmall(usize),
    #[error("step applied to a terminated rollout")]
    AlreadyTerminated,
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Error raised inside a policy implementation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("unknown synthetic instance: {0}")]
    UnknownInstance(String),
    #[error("{0}")]
    Other(String),
}

/// Everything a policy sees when producing its next message: the question,
/// the low-rate skim, and the conversation so far (turns, observations, and
/// error notes).
pub struct PolicyContext<'a> {
    pub video: &'a VideoMeta,
    pub question: &'a Question,
    pub skim: &'a Observation,
    pub steps: &'a [Step],
    pub t_max: usize,
}

impl PolicyContext<'_> {
    /// Index of the turn about to be generated (0-based).
    pub fn turn_index(&self) -> usize {
        self.steps.len()
    }
}

/// A policy produces one raw assistant message per turn. Implementations must
/// be deterministic given the rollout's seeded RNG and tolerate concurrent
/// invocation.
pub trait Policy: Send + Sync {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError>;
}

/// In-flight rollout state; becomes a [`Trajectory`] at termination.
#[derive(Debug, Clone)]
pub struct RolloutState {
    pub video: VideoMeta,
    pub question: Question,
    pub skim: Observation,
    pub steps: Vec<Step>,
    pub terminated: Option<Termination>,
}

impl RolloutState {
    pub fn new(video: VideoMeta, question: Question, cfg: &RolloutConfig) -> Self {
        let skim = cliptool::skim_plan(&video, &cfg.sampling);
        Self {
            video,
            question,
            skim,
            steps: Vec::new(),
            terminated: None,
        }
    }

    pub fn context(&self, cfg: &RolloutConfig) -> PolicyContext<'_> {
        PolicyContext {
            video: &self.video,
            question: &self.question,
            skim: &self.skim,
            steps: &self.steps,
            t_max: cfg.t_max,
        }
    }

    fn into_trajectory(self, terminated_by: Termination) -> Trajectory {
        Trajectory {
            video: self.video,
            question: self.question,
            steps: self.steps,
            terminated_by,
            group_id: None,
        }
    }
}

/// Applies one raw assistant message to the state: parse, attach the clip
/// observation if the action is a clip, terminate on an answer or when the
/// turn budget runs out. Parse failures are routed per
/// [`RolloutConfig::on_parse_failure`].
pub fn step(state: &mut RolloutState, raw: &str, cfg: &RolloutConfig) -> Result<(), RolloutError> {
    if state.terminated.is_some() {
        return Err(RolloutError::AlreadyTerminated);
    }
    let turn_no = state.steps.len();
    let last_allowed = turn_no + 1 >= cfg.t_max;
    match parse_assistant(raw) {
        Ok(turn) => match &turn.action {
            Action::Clip { interval } => {
                if last_allowed {
                    state.steps.push(Step::parsed(turn, None));
                    state.terminated = Some(Termination::MaxTurns);
                } else {
                    match cliptool::crop_plan(&state.video, *interval, &cfg.sampling) {
                        Ok(obs) => state.steps.push(Step::parsed(turn, Some(obs))),
                        Err(ClipError::OutOfRange { .. }) => state.steps.push(Step {
                            turn: TurnBody::Parsed(turn),
                            observation: None,
                            clip_error: Some("clip interval outside video range".to_string()),
                        }),
                        Err(e) => state.steps.push(Step {
                            turn: TurnBody::Parsed(turn),
                            observation: None,
                            clip_error: Some(e.to_string()),
                        }),
                    }
                }
            }
            Action::AnswerText { .. } | Action::AnswerInterval { .. } => {
                state.steps.push(Step::parsed(turn, None));
                state.terminated = Some(Termination::Answer);
            }
        },
        Err(failure) => {
            state.steps.push(Step {
                turn: TurnBody::Malformed {
                    raw_text: raw.to_string(),
                    reason: failure.reason,
                },
                observation: None,
                clip_error: None,
            });
            match cfg.on_parse_failure {
                ParseFailurePolicy::Terminate => {
                    state.terminated = Some(Termination::ProtocolError)
                }
                ParseFailurePolicy::ErrorObservationAndContinue => {
                    if last_allowed {
                        state.terminated = Some(Termination::MaxTurns);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs one full episode. Deterministic given (policy, seed, inputs).
pub fn run_rollout(
    policy: &dyn Policy,
    video: &VideoMeta,
    question: &Question,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<Trajectory, RolloutError> {
    let mut state = RolloutState::new(video.clone(), question.clone(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while state.terminated.is_none() {
        let raw = {
            let ctx = state.context(cfg);
            policy.next_message(&ctx, &mut rng)
        };
        let raw = match raw {
            Ok(raw) => raw,
            Err(e) => {
                return Err(RolloutError::PolicyFailure {
                    source: e,
                    turn: state.steps.len(),
                    partial: state.steps,
                })
            }
        };
        step(&mut state, &raw, cfg)?;
    }
    let termination = state.terminated.expect("loop exits only on termination");
    Ok(state.into_trajectory(termination))
}

/// One group of rollouts sharing a (video, question) prompt, plus each
/// trajectory's reward. Per-trajectory failures are kept; they do not abort
/// the group.
#[derive(Debug)]
pub struct GroupRollout {
    pub trajectories: Vec<Result<Trajectory, RolloutError>>,
    pub rewards: Vec<Option<f64>>,
}

impl GroupRollout {
    /// The reward vector, available only when every rollout succeeded.
    pub fn complete_rewards(&self) -> Option<Vec<f64>> {
        self.rewards.iter().copied().collect()
    }
}

/// Samples `g` trajectories with seeds derived per index, scoring each one.
pub fn run_group(
    policy: &dyn Policy,
    video: &VideoMeta,
    question: &Question,
    g: usize,
    cfg: &RolloutConfig,
    reward_cfg: &RewardConfig,
    seed: u64,
) -> Result<GroupRollout, RolloutError> {
    run_group_with(|_| policy, video, question, g, cfg, reward_cfg, seed)
}

/// Like [`run_group`] but with a per-index policy selector, which lets tests
/// mix scripted policies inside one group.
#[allow(clippy::too_many_arguments)]
pub fn run_group_with<'a, F>(
    policy_for: F,
    video: &VideoMeta,
    question: &Question,
    g: usize,
    cfg: &RolloutConfig,
    reward_cfg: &RewardConfig,
    seed: u64,
) -> Result<GroupRollout, RolloutError>
where
    F: Sync + Send + Fn(usize) -> &'a dyn Policy,
{
    if g < 2 {
        return Err(RolloutError::GroupTooSmall(g));
    }
    let trajectories = exec::map_indices(g, |i| {
        run_rollout(
            policy_for(i),
            video,
            question,
            cfg,
            exec::derive_seed(seed, i as u64),
        )
    });
    let rewards = trajectories
        .iter()
        .map(|r| match r {
            Ok(t) => score_trajectory(t, reward_cfg).ok().map(|b| b.total),
            Err(_) => None,
        })
        .collect();
    Ok(GroupRollout {
        trajectories,
        rewards,
    })
}

/// Rolls out one trajectory per (video, question) pair, in parallel when
/// enabled. Seeds derive from the pair index.
pub fn rollout_many(
    policy: &dyn Policy,
    instances: &[(VideoMeta, Question)],
    cfg: &RolloutConfig,
    seed: u64,
) -> Vec<Result<Trajectory, RolloutError>> {
    exec::map_indices(instances.len(), |i| {
        let (video, question) = &instances[i];
        run_rollout(policy, video, question, cfg, exec::derive_seed(seed, i as u64))
    })
}

/// Sequential twin of [`rollout_many`], kept callable for benchmarking.
pub fn rollout_many_seq(
    policy: &dyn Policy,
    instances: &[(VideoMeta, Question)],
    cfg: &RolloutConfig,
    seed: u64,
) -> Vec<Result<Trajectory, RolloutError>> {
    exec::map_indices_seq(instances.len(), |i| {
        let (video, question) = &instances[i];
        run_rollout(policy, video, question, cfg, exec::derive_seed(seed, i as u64))
    })
}

/// Tool-call statistics over a set of trajectories.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToolCallStats {
    /// Fraction of trajectories with at least one clip action.
    pub clip_ratio: f64,
    /// Mean number of clip actions per trajectory.
    pub avg_clips: f64,
}

/// Measures on-demand clipping behavior. `None` on empty input.
pub fn toolcall_behavior(trajectories: &[Trajectory]) -> Option<ToolCallStats> {
    if trajectories.is_empty() {
        return None;
    }
    let n = trajectories.len() as f64;
    let clip_counts: Vec<usize> = trajectories
        .iter()
        .map(|t| t.clip_intervals().len())
        .collect();
    let with_clip = clip_counts.iter().filter(|&&c| c > 0).count() as f64;
    let total: usize = clip_counts.iter().sum();
    Some(ToolCallStats {
        clip_ratio: with_clip / n,
        avg_clips: total as f64 / n,
    })
}
