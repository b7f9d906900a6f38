//! Frame-timestamp planning for video crops.
//!
//! Crops are planned, not decoded: the tool turns an interval request into a
//! deterministic list of frame timestamps under the sampling budgets (fps cap,
//! skim cap, per-clip cap). Actual pixel extraction is delegated to an
//! external hook that receives the timestamps file.

use std::io::Write;
use std::path::Path;
use std::process::Command;

use thiserror::Error;

use crate::types::{Observation, TemporalInterval, VideoMeta};

/// Sampling budgets. The frame edge is metadata only; no pixels move here.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplingConfig {
    pub fps_cap: f64,
    pub skim_max_frames: usize,
    pub clip_max_frames: usize,
    pub frame_edge_px: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            fps_cap: 2.0,
            skim_max_frames: 512,
            clip_max_frames: 64,
            frame_edge_px: 224,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ClipError> {
        if self.fps_cap <= 0.0 || !self.fps_cap.is_finite() {
            return Err(ClipError::BadConfig("fps_cap must be positive"));
        }
        if self.clip_max_frames == 0 || self.clip_max_frames > self.skim_max_frames {
            return Err(ClipError::BadConfig(
                "need 0 < clip_max_frames <= skim_max_frames",
            ));
        }
        Ok(())
    }

    /// Whether the densification comparison is meaningful for this clip on
    /// this video: the clip must fit the per-clip budget at full rate, and
    /// the video must be long enough that its skim is diluted below the
    /// worst-case clip density (duration >= 2 * skim_max / fps_cap). Below
    /// that, floor effects in the candidate count can invert the comparison.
    pub fn densification_applies(&self, video: &VideoMeta, clip_len_s: f64) -> bool {
        clip_len_s <= self.clip_max_frames as f64 / self.fps_cap
            && video.duration_s() >= 2.0 * self.skim_max_frames as f64 / self.fps_cap
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClipError {
    /// The requested interval does not intersect the video at all.
    #[error("interval [{start}, {end}] lies outside the {duration} s video")]
    OutOfRange { start: f64, end: f64, duration: f64 },
    #[error("zero-length interval has no frame density")]
    DegenerateSpan,
    #[error("invalid sampling config: {0}")]
    BadConfig(&'static str),
}

/// Intersects a predicted interval with `[0, duration]`.
///
/// `OutOfRange` signals an unusable prediction; the caller decides whether
/// that becomes an error observation or an IoU of zero.
pub fn clamp_interval(p: TemporalInterval, v: &VideoMeta) -> Result<TemporalInterval, ClipError> {
    let duration = v.duration_s();
    if p.start_s() > duration {
        return Err(ClipError::OutOfRange {
            start: p.start_s(),
            end: p.end_s(),
            duration,
        });
    }
    let end = p.end_s().min(duration);
    Ok(TemporalInterval::new(p.start_s(), end).expect("clamped interval stays ordered"))
}

/// Plans `n = min(max_frames, max(1, floor(length * fps_cap)))` timestamps at
/// bin centers: `start + (k + 0.5) * length / n`. Bin centers avoid duplicate
/// boundary frames when adjacent clips are concatenated. A zero-length span
/// yields its single point.
pub fn uniform_timestamps(
    span: TemporalInterval,
    fps_cap: f64,
    max_frames: usize,
) -> Vec<f64> {
    let length = span.length_s();
    let candidates = (length * fps_cap).floor() as usize;
    let n = candidates.clamp(1, max_frames.max(1));
    let step = length / n as f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let ts = span.start_s() + (k as f64 + 0.5) * step;
        // Degenerate float spacing can collapse neighbours; keep the list
        // strictly increasing by dropping collapsed points.
        if out.last().is_none_or(|&prev| ts > prev) && ts <= span.end_s() {
            out.push(ts);
        }
    }
    if out.is_empty() {
        out.push(span.start_s());
    }
    out
}

/// Plans the low-rate skim of the whole video.
pub fn skim_plan(v: &VideoMeta, cfg: &SamplingConfig) -> Observation {
    let span = v.full_span();
    Observation {
        frame_timestamps: uniform_timestamps(span, cfg.fps_cap, cfg.skim_max_frames),
        interval_applied: span,
    }
}

/// Clamps the request and plans a dense sample within it, under the per-clip
/// budget.
pub fn crop_plan(
    v: &VideoMeta,
    p: TemporalInterval,
    cfg: &SamplingConfig,
) -> Result<Observation, ClipError> {
    let span = clamp_interval(p, v)?;
    Ok(Observation {
        frame_timestamps: uniform_timestamps(span, cfg.fps_cap, cfg.clip_max_frames),
        interval_applied: span,
    })
}

/// Frames per second actually achieved by an observation.
pub fn effective_density(obs: &Observation) -> Result<f64, ClipError> {
    let len = obs.interval_applied.length_s();
    if len <= 0.0 {
        return Err(ClipError::DegenerateSpan);
    }
    Ok(obs.frame_timestamps.len() as f64 / len)
}

/// Writes the timestamps file consumed by the external extractor: one decimal
/// seconds value per line.
pub fn write_timestamps_file(path: &Path, timestamps: &[f64]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    for ts in timestamps {
        writeln!(f, "{}", crate::protocol::fmt_seconds(*ts))?;
    }
    Ok(())
}

/// Builds the external extractor invocation:
/// `<program> --video <uri> --timestamps <file>`.
pub fn extractor_command(program: &str, video_uri: &str, timestamps_file: &Path) -> Command {
    let mut cmd = Command::new(program);
    cmd.arg("--video")
        .arg(video_uri)
        .arg("--timestamps")
        .arg(timestamps_file);
    cmd
}
