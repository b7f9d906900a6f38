//! HTTP transport for remote policies: `POST /v1/generate` with the
//! role-structured message contract, retried with idempotent request ids.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rollout::{Policy, PolicyContext, PolicyError};
use crate::types::{Step, TurnBody};

/// One conversation message on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: Vec<WirePart>,
}

/// Message content: plain text, or a frames block naming the sampled
/// timestamps of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WirePart {
    Text { text: String },
    Frames { timestamps: Vec<f64>, clip: [f64; 2] },
}

#[derive(Debug, Serialize)]
struct GenerateRequest<'a> {
    messages: &'a [WireMessage],
    temperature: f64,
    request_id: &'a str,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Blocking client for the `/v1/generate` endpoint. Transport failures are
/// retried twice with the same request id, so the server can deduplicate.
pub struct RemoteClient {
    endpoint: String,
    temperature: f64,
    retries: u32,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8000`.
    pub fn new(base_url: &str, temperature: f64) -> Self {
        Self {
            endpoint: format!("{}/v1/generate", base_url.trim_end_matches('/')),
            temperature,
            retries: 2,
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn generate(
        &self,
        messages: &[WireMessage],
        request_id: &str,
    ) -> Result<String, PolicyError> {
        let body = GenerateRequest {
            messages,
            temperature: self.temperature,
            request_id,
        };
        let mut last_err = String::new();
        for _attempt in 0..=self.retries {
            match self.http.post(&self.endpoint).json(&body).send() {
                Ok(resp) => {
                    if resp.status().is_success() {
                        return resp
                            .json::<GenerateResponse>()
                            .map(|r| r.text)
                            .map_err(|e| PolicyError::Transport(e.to_string()));
                    }
                    last_err = format!("server returned {}", resp.status());
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(PolicyError::Transport(last_err))
    }
}

/// Serializes the rollout conversation in the wire contract: the user turn
/// carries the question and the skim frames; each assistant turn is its raw
/// message; observations and error notes come back as tool turns.
pub fn conversation_to_wire(ctx: &PolicyContext<'_>) -> Vec<WireMessage> {
    let mut messages = vec![WireMessage {
        role: "user".to_string(),
        content: vec![
            WirePart::Text {
                text: ctx.question.text.clone(),
            },
            WirePart::Frames {
                timestamps: ctx.skim.frame_timestamps.clone(),
                clip: ctx.skim.interval_applied.into(),
            },
        ],
    }];
    for step in ctx.steps {
        messages.push(WireMessage {
            role: "assistant".to_string(),
            content: vec![WirePart::Text {
                text: step.turn.raw_text().to_string(),
            }],
        });
        if let Some(note) = tool_note(step) {
            messages.push(note);
        }
    }
    messages
}

fn tool_note(step: &Step) -> Option<WireMessage> {
    if let Some(obs) = &step.observation {
        return Some(WireMessage {
            role: "tool".to_string(),
            content: vec![WirePart::Frames {
                timestamps: obs.frame_timestamps.clone(),
                clip: obs.interval_applied.into(),
            }],
        });
    }
    if let Some(err) = &step.clip_error {
        return Some(WireMessage {
            role: "tool".to_string(),
            content: vec![WirePart::Text {
                text: format!("clip request rejected: {err}"),
            }],
        });
    }
    if let TurnBody::Malformed { .. } = step.turn {
        return Some(WireMessage {
            role: "tool".to_string(),
            content: vec![WirePart::Text {
                text: "malformed tool call".to_string(),
            }],
        });
    }
    None
}

/// A policy served by a remote model over HTTP.
pub struct HttpPolicy {
    client: RemoteClient,
}

impl HttpPolicy {
    pub fn new(client: RemoteClient) -> Self {
        Self { client }
    }
}

impl Policy for HttpPolicy {
    fn next_message(
        &self,
        ctx: &PolicyContext<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<String, PolicyError> {
        let messages = conversation_to_wire(ctx);
        // One id per logical request; retries reuse it.
        let request_id = format!(
            "{}-t{}-{:016x}",
            ctx.video.id(),
            ctx.turn_index(),
            rng.gen::<u64>()
        );
        self.client.generate(&messages, &request_id)
    }
}
