use serde::{Deserialize, Serialize};
use std::fmt;

use crate::domain::{EncodingOutcome, RewardWeights};
use crate::{Error, Result};

/// Min/max of quality and decoding time used to normalise rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBounds {
    pub q_min: f64,
    pub q_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl RewardBounds {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a EncodingOutcome>) -> Result<Self> {
        let mut b = RewardBounds {
            q_min: f64::INFINITY,
            q_max: f64::NEG_INFINITY,
            t_min: f64::INFINITY,
            t_max: f64::NEG_INFINITY,
        };
        for o in outcomes {
            b.q_min = b.q_min.min(o.quality);
            b.q_max = b.q_max.max(o.quality);
            b.t_min = b.t_min.min(o.dec_time_s);
            b.t_max = b.t_max.max(o.dec_time_s);
        }
        if !b.q_min.is_finite() {
            return Err(Error::Data("no outcomes to derive reward bounds from".into()));
        }
        Ok(b)
    }
}

/// `(v - lo) / (hi - lo)` clamped to [0, 1]; 0 when the range is empty.
pub fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyPolicy {
    /// 1 whenever the resolution differs from the previous rung.
    #[default]
    Fixed,
    /// Normalised distance to the nearer of the two previous resolutions,
    /// charged only when the new resolution matches neither.
    HistoryAware,
}

impl PenaltyPolicy {
    /// Switch penalty for choosing `r` after `history` (oldest first).
    /// `range` is the spread of the configured resolutions.
    pub fn delta(self, r: u32, history: &[u32], range: f64) -> f64 {
        match self {
            PenaltyPolicy::Fixed => match history.last() {
                Some(&p) if p != r => 1.0,
                _ => 0.0,
            },
            PenaltyPolicy::HistoryAware => {
                let window = &history[history.len().saturating_sub(2)..];
                if window.is_empty() || window.contains(&r) || range <= 0.0 {
                    return 0.0;
                }
                let nearest = window
                    .iter()
                    .map(|&p| (f64::from(r) - f64::from(p)).abs())
                    .fold(f64::INFINITY, f64::min);
                (nearest / range).min(1.0)
            }
        }
    }
}

impl fmt::Display for PenaltyPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyPolicy::Fixed => "fixed",
            PenaltyPolicy::HistoryAware => "history-aware",
        })
    }
}

impl std::str::FromStr for PenaltyPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(PenaltyPolicy::Fixed),
            "history-aware" | "history_aware" | "history" => Ok(PenaltyPolicy::HistoryAware),
            other => Err(Error::Config(format!("unknown penalty policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub q_norm: f64,
    pub t_norm: f64,
    pub delta: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// `lambda1 * q - lambda2 * t - lambda3 * delta`.
    pub fn from_terms(q_norm: f64, t_norm: f64, delta: f64, w: &RewardWeights) -> Self {
        Self {
            q_norm,
            t_norm,
            delta,
            total: w.lambda1 * q_norm - w.lambda2 * t_norm - w.lambda3 * delta,
        }
    }
}

/// Reward for an outcome with quality `q` and decoding time `t` at
/// resolution `r`, given the resolutions already placed on the ladder.
#[allow(clippy::too_many_arguments)]
pub fn reward(
    q: f64,
    t: f64,
    r: u32,
    history: &[u32],
    bounds: &RewardBounds,
    weights: &RewardWeights,
    policy: PenaltyPolicy,
    resolution_range: f64,
) -> RewardBreakdown {
    RewardBreakdown::from_terms(
        min_max(q, bounds.q_min, bounds.q_max),
        min_max(t, bounds.t_min, bounds.t_max),
        policy.delta(r, history, resolution_range),
        weights,
    )
}
