//! Deep Q-network: MLP value function, Adam, replay memory, epsilon-greedy
//! exploration, target network and the training loop.

mod adam;
mod mlp;
mod replay;
mod train;

pub use adam::{Adam, AdamParams};
pub use mlp::{Grads, Layer, Mlp, Trace};
pub use replay::{ReplayMemory, Transition};
pub use train::{train, EpisodeStats, TrainOutcome, TrainSetup, TRACE_HEADER};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::domain::{ConfigSpace, QualityMetric, RewardWeights};
use crate::ladder::{min_max, PenaltyPolicy, RewardBounds};
use crate::rng::Rng;
use crate::{io, Error, Result};

/// When the target network is refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyncUnit {
    /// Every `target_sync` stored transitions.
    #[default]
    Transition,
    /// Every `target_sync` episodes.
    Episode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync: usize,
    pub sync_unit: SyncUnit,
    pub eps_start: f64,
    pub eps_end: f64,
    pub episodes: usize,
    pub hidden_layers: Vec<usize>,
    /// Subtracted from the reward when an action overshoots the target
    /// bitrate or lowers quality relative to the previous rung.
    pub infeasible_penalty: f64,
    /// Fail if the replay memory still holds fewer than `batch_size`
    /// transitions after this many steps.
    pub max_warmup: Option<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            gamma: 0.7,
            batch_size: 128,
            replay_capacity: 10_000,
            target_sync: 10,
            sync_unit: SyncUnit::Transition,
            eps_start: 0.8,
            eps_end: 0.05,
            episodes: 2000,
            hidden_layers: vec![256, 128, 64],
            infeasible_penalty: 1.0,
            max_warmup: None,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(0.0 < self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return bad("epsilon schedule needs 0 < eps_end <= eps_start <= 1");
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return bad("batch_size must be in 1..=replay_capacity");
        }
        if self.target_sync == 0 {
            return bad("target_sync must be >= 1");
        }
        if self.episodes == 0 {
            return bad("episodes must be >= 1");
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.infeasible_penalty.is_finite() && self.infeasible_penalty >= 0.0) {
            return bad("infeasible_penalty must be >= 0");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, n_actions: usize) -> Vec<usize> {
        let mut s = vec![4];
        s.extend(&self.hidden_layers);
        s.push(n_actions);
        s
    }
}

/// Linear decay from `eps_start` at episode 0 to `eps_end` at episode
/// `episodes`, floored at `eps_end`.
pub fn decay_epsilon(episode: usize, cfg: &DqnConfig) -> f64 {
    let frac = (episode as f64 / cfg.episodes as f64).min(1.0);
    // Convex combination, so both endpoints are reproduced exactly.
    ((1.0 - frac) * cfg.eps_start + frac * cfg.eps_end).max(cfg.eps_end)
}

/// Index of the largest value among `allowed`; ties go to the lower index.
pub fn masked_argmax(q: &[f64], allowed: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &a in allowed {
        best = match best {
            None => Some(a),
            Some(b) if q[a] > q[b] || (q[a] == q[b] && a < b) => Some(a),
            keep => keep,
        };
    }
    best
}

/// Epsilon-greedy choice over `allowed` action indices.
pub fn select_action(net: &Mlp, state: &[f64; 4], eps: f64, allowed: &[usize], rng: &mut Rng) -> Result<usize> {
    if allowed.is_empty() {
        return Err(Error::Data("no feasible action for this rung".into()));
    }
    if rng.random::<f64>() < eps {
        return Ok(allowed[rng.random_range(0..allowed.len())]);
    }
    let q = net.forward(state)?;
    Ok(masked_argmax(&q, allowed).expect("non-empty"))
}

/// Copy online weights into the target network when `step` is a multiple
/// of `every`.
pub fn sync_target(net: &Mlp, target: &mut Mlp, step: usize, every: usize) {
    if every > 0 && step.is_multiple_of(every) {
        target.copy_from(net);
    }
}

/// Bellman targets: `r` on terminal transitions, otherwise
/// `r + gamma * max_a' Q_target(s', a')`.
pub fn td_targets(target: &Mlp, batch: &[Transition], gamma: f64) -> Vec<f64> {
    let next: Vec<f64> = batch.iter().flat_map(|t| t.next_state).collect();
    let trace = target.forward_batch(&next, batch.len());
    let out = target.output_dim();
    batch
        .iter()
        .zip(trace.output().chunks_exact(out))
        .map(|(t, q)| {
            if t.terminal {
                t.reward
            } else {
                t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect()
}

/// One Adam step on the squared TD error; returns the loss before the step.
pub fn td_update(net: &mut Mlp, target: &Mlp, batch: &[Transition], gamma: f64, adam: &mut Adam) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("empty training batch".into()));
    }
    let ys = td_targets(target, batch, gamma);
    let states: Vec<f64> = batch.iter().flat_map(|t| t.state).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = net.loss_and_grad(&states, &actions, &ys);
    adam.step(net, &grads);
    Ok(loss)
}

/// Per-dimension min/max of `[tb, prev_bitrate, prev_quality, prev_dec_time]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl StateBounds {
    pub fn normalize(&self, raw: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| min_max(raw[i], self.min[i], self.max[i]))
    }

    /// True when every component lies within the bounds (up to a relative
    /// tolerance for float noise).
    pub fn contains(&self, raw: &[f64; 4]) -> bool {
        (0..4).all(|i| {
            let tol = 1e-12 * self.max[i].abs().max(self.min[i].abs()).max(1.0);
            raw[i] >= self.min[i] - tol && raw[i] <= self.max[i] + tol
        })
    }

    /// Previous-rung values that normalise to zero; used for the first rung.
    pub fn sentinel(&self) -> [f64; 3] {
        [self.min[1], self.min[2], self.min[3]]
    }
}

const CHECKPOINT_FORMAT: &str = "ladderq-agent";
const CHECKPOINT_VERSION: u32 = 1;

/// A trained agent together with everything needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    format: String,
    version: u32,
    pub net: Mlp,
    pub state_bounds: StateBounds,
    pub reward_bounds: RewardBounds,
    pub space: ConfigSpace,
    pub metric: QualityMetric,
    pub weights: RewardWeights,
    pub penalty: PenaltyPolicy,
    pub config: DqnConfig,
    pub seed: u64,
}

impl Agent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: Mlp,
        state_bounds: StateBounds,
        reward_bounds: RewardBounds,
        space: ConfigSpace,
        metric: QualityMetric,
        weights: RewardWeights,
        penalty: PenaltyPolicy,
        config: DqnConfig,
        seed: u64,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            net,
            state_bounds,
            reward_bounds,
            space,
            metric,
            weights,
            penalty,
            config,
            seed,
        }
    }

    pub fn q_values(&self, raw_state: &[f64; 4]) -> Result<Vec<f64>> {
        self.net.forward(&self.state_bounds.normalize(raw_state))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(s)?;
        a.check()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        io::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a: Self = io::read_json(path)?;
        a.check()?;
        Ok(a)
    }

    fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        // Re-validate the network shape, which serde does not check.
        let net = Mlp::from_layers(self.net.layers().to_vec())?;
        if net.input_dim() != 4 || net.output_dim() != self.space.n_actions() {
            return Err(Error::Data("checkpoint network does not match its action space".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn epsilon_endpoints_and_midpoint() {
        let cfg = DqnConfig::default();
        assert_eq!(decay_epsilon(0, &cfg), 0.8);
        assert_eq!(decay_epsilon(cfg.episodes, &cfg), 0.05);
        assert!((decay_epsilon(cfg.episodes / 2, &cfg) - 0.425).abs() < 1e-15);
        assert_eq!(decay_epsilon(10 * cfg.episodes, &cfg), 0.05);
        let mut prev = 1.0;
        for e in 0..=cfg.episodes {
            let v = decay_epsilon(e, &cfg);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn greedy_respects_mask_and_ties() {
        let q = [0.0, 5.0, 3.0, 3.0, 1.0];
        assert_eq!(masked_argmax(&q, &[0, 1, 2, 3, 4]), Some(1));
        assert_eq!(masked_argmax(&q, &[4, 3, 2, 0]), Some(2));
        assert_eq!(masked_argmax(&q, &[]), None);
    }

    #[test]
    fn epsilon_zero_picks_masked_argmax() {
        let net = Mlp::from_layers(vec![Layer {
            fan_in: 4,
            fan_out: 3,
            weights: vec![0.0; 12],
            biases: vec![1.0, 9.0, 2.0],
        }])
        .unwrap();
        let mut rng = seeded(0);
        assert_eq!(select_action(&net, &[0.0; 4], 0.0, &[0, 1, 2], &mut rng).unwrap(), 1);
        assert_eq!(select_action(&net, &[0.0; 4], 0.0, &[0, 2], &mut rng).unwrap(), 2);
        assert!(select_action(&net, &[0.0; 4], 0.0, &[], &mut rng).is_err());
    }

    #[test]
    fn sync_copies_only_on_multiples() {
        let mut rng = seeded(4);
        let net = Mlp::new(&[4, 5, 3], &mut rng).unwrap();
        let mut target = Mlp::zeros(&[4, 5, 3]).unwrap();
        sync_target(&net, &mut target, 7, 10);
        assert_ne!(target, net);
        sync_target(&net, &mut target, 20, 10);
        assert_eq!(target, net);
    }

    #[test]
    fn config_validation() {
        assert!(DqnConfig::default().validate().is_ok());
        let bad = [
            DqnConfig {
                gamma: 1.0,
                ..Default::default()
            },
            DqnConfig {
                eps_end: 0.9,
                ..Default::default()
            },
            DqnConfig {
                batch_size: 20_000,
                ..Default::default()
            },
            DqnConfig {
                target_sync: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn state_normalisation() {
        let b = StateBounds {
            min: [100.0, 50.0, 20.0, 1.0],
            max: [200.0, 50.0, 40.0, 3.0],
        };
        assert_eq!(b.normalize(&[150.0, 50.0, 40.0, 0.0]), [0.5, 0.0, 1.0, 0.0]);
        assert!(b.contains(&[100.0, 50.0, 30.0, 3.0]));
        assert!(!b.contains(&[99.0, 50.0, 30.0, 3.0]));
    }
}
