use serde::{Deserialize, Serialize};

use super::{
    decay_epsilon, select_action, sync_target, td_update, Adam, AdamParams, Agent, DqnConfig, Mlp, ReplayMemory,
    StateBounds, SyncUnit, Transition,
};
use crate::domain::{ConfigSpace, QualityMetric, RewardWeights, SegmentFeatures};
use crate::environment::{Environment, OutcomeGrid};
use crate::ladder::{reward, PenaltyPolicy, RewardBounds};
use crate::rng::stream;
use crate::{Error, Result};

pub const TRACE_HEADER: [&str; 5] = [
    "episode",
    "cum_reward",
    "quality_term",
    "dectime_penalty",
    "switch_penalty",
];

/// Per-episode sums of the reward and its three weighted terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub cum_reward: f64,
    pub quality_term: f64,
    pub dectime_penalty: f64,
    pub switch_penalty: f64,
}

pub struct TrainSetup<'a> {
    pub env: &'a dyn Environment,
    pub corpus: &'a [SegmentFeatures],
    pub space: &'a ConfigSpace,
    pub metric: QualityMetric,
    pub weights: RewardWeights,
    pub penalty: PenaltyPolicy,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub trace: Vec<EpisodeStats>,
    pub replay: ReplayMemory,
    pub transitions: usize,
    pub updates: usize,
    /// Transitions stored before the first network update.
    pub warmup_transitions: usize,
}

const INIT_STREAM: u64 = 1;
const EXPLORE_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

/// Corpus-wide bounds over every measured outcome, for both the state and
/// the reward normalisation.
fn corpus_bounds(grids: &[OutcomeGrid], space: &ConfigSpace) -> Result<(StateBounds, RewardBounds)> {
    let rb = RewardBounds::from_outcomes(grids.iter().flat_map(|g| &g.outcomes))?;
    let (b_min, b_max) = grids
        .iter()
        .flat_map(|g| &g.outcomes)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
            (lo.min(o.bitrate_kbps), hi.max(o.bitrate_kbps))
        });
    let tbs = space.target_bitrates();
    let sb = StateBounds {
        min: [tbs[0], b_min, rb.q_min, rb.t_min],
        max: [tbs[tbs.len() - 1], b_max, rb.q_max, rb.t_max],
    };
    Ok((sb, rb))
}

/// Run `cfg.episodes` passes over every segment and target bitrate.
pub fn train(setup: &TrainSetup<'_>, cfg: &DqnConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    setup.weights.validate()?;
    if setup.corpus.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let space = setup.space;
    let grids = measure_all(setup)?;
    let (state_bounds, reward_bounds) = corpus_bounds(&grids, space)?;

    let sizes = cfg.layer_sizes(space.n_actions());
    let mut net = Mlp::new(&sizes, &mut stream(seed, INIT_STREAM))?;
    let mut target = net.clone();
    let mut adam = Adam::new(AdamParams::with_learning_rate(cfg.learning_rate), net.param_count());
    let mut replay = ReplayMemory::new(cfg.replay_capacity)?;
    let mut explore = stream(seed, EXPLORE_STREAM);
    let mut sampler = stream(seed, SAMPLE_STREAM);

    let all_actions: Vec<usize> = (0..space.n_actions()).collect();
    let tbs = space.target_bitrates();
    let range = space.resolution_range();
    let w = setup.weights;
    let mut trace = Vec::with_capacity(cfg.episodes);
    let mut transitions = 0usize;
    let mut updates = 0usize;
    let mut warmup_transitions = None;

    for episode in 0..cfg.episodes {
        let eps = decay_epsilon(episode, cfg);
        let mut stats = EpisodeStats {
            episode,
            cum_reward: 0.0,
            quality_term: 0.0,
            dectime_penalty: 0.0,
            switch_penalty: 0.0,
        };
        for grid in &grids {
            let [mut pb, mut pq, mut pt] = state_bounds.sentinel();
            let mut history: Vec<u32> = Vec::with_capacity(tbs.len());
            for (i, &tb) in tbs.iter().enumerate() {
                let raw = [tb, pb, pq, pt];
                if !state_bounds.contains(&raw) {
                    return Err(Error::Invariant(format!("state {raw:?} outside normalisation bounds")));
                }
                let s = state_bounds.normalize(&raw);
                let a = select_action(&net, &s, eps, &all_actions, &mut explore)?;
                let action = space.action(a);
                let o = grid.get(a);
                let r = reward(
                    o.quality,
                    o.dec_time_s,
                    action.resolution,
                    &history,
                    &reward_bounds,
                    &w,
                    setup.penalty,
                    range,
                );
                let infeasible = o.bitrate_kbps > tb || (i > 0 && o.quality < pq);
                let total = r.total - if infeasible { cfg.infeasible_penalty } else { 0.0 };
                stats.cum_reward += total;
                stats.quality_term += w.lambda1 * r.q_norm;
                stats.dectime_penalty += w.lambda2 * r.t_norm;
                stats.switch_penalty += w.lambda3 * r.delta;

                let terminal = i + 1 == tbs.len();
                let next_tb = tbs[(i + 1).min(tbs.len() - 1)];
                let next_raw = [next_tb, o.bitrate_kbps, o.quality, o.dec_time_s];
                replay.push(Transition {
                    state: s,
                    action: a,
                    reward: total,
                    next_state: state_bounds.normalize(&next_raw),
                    terminal,
                });
                transitions += 1;

                if replay.len() >= cfg.batch_size {
                    if warmup_transitions.is_none() {
                        warmup_transitions = Some(transitions);
                        log::info!("replay warm after {transitions} transitions; updates start");
                    }
                    let batch = replay.sample(cfg.batch_size, &mut sampler);
                    td_update(&mut net, &target, &batch, cfg.gamma, &mut adam)?;
                    updates += 1;
                } else if cfg.max_warmup.is_some_and(|m| transitions >= m) {
                    return Err(Error::Config(format!(
                        "replay memory did not reach batch size {} within {transitions} transitions",
                        cfg.batch_size
                    )));
                }
                if cfg.sync_unit == SyncUnit::Transition {
                    sync_target(&net, &mut target, transitions, cfg.target_sync);
                }

                pb = o.bitrate_kbps;
                pq = o.quality;
                pt = o.dec_time_s;
                history.push(action.resolution);
            }
        }
        if cfg.sync_unit == SyncUnit::Episode {
            sync_target(&net, &mut target, episode + 1, cfg.target_sync);
        }
        log::debug!("episode {episode}: eps {eps:.3} reward {:.4}", stats.cum_reward);
        trace.push(stats);
    }

    let agent = Agent::new(
        net,
        state_bounds,
        reward_bounds,
        space.clone(),
        setup.metric,
        setup.weights,
        setup.penalty,
        cfg.clone(),
        seed,
    );
    Ok(TrainOutcome {
        agent,
        trace,
        replay,
        transitions,
        updates,
        warmup_transitions: warmup_transitions.unwrap_or(transitions),
    })
}

fn measure_all(setup: &TrainSetup<'_>) -> Result<Vec<OutcomeGrid>> {
    let one = |seg: &SegmentFeatures| OutcomeGrid::measure(setup.env, seg, setup.space, setup.metric);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        setup.corpus.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        setup.corpus.iter().map(one).collect()
    }
}
