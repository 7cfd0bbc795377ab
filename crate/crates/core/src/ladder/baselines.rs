//! Reference ladder constructors. Each works on an outcome table indexed by
//! action index (`ConfigSpace::action`), measured or predicted.

use std::cmp::Ordering;

use super::reward::{reward, PenaltyPolicy, RewardBounds};
use crate::domain::{ConfigSpace, EncodingOutcome, Ladder, LadderRung, RewardWeights, RungFlags};
use crate::{Error, Result};

/// Fixed resolution per target bitrate of the HLS authoring guidelines.
pub const HLS_TEMPLATE: [(f64, u32); 12] = [
    (145.0, 360),
    (300.0, 360),
    (600.0, 540),
    (900.0, 540),
    (1600.0, 540),
    (2400.0, 720),
    (3400.0, 720),
    (4500.0, 1080),
    (5800.0, 1080),
    (8100.0, 1440),
    (11600.0, 2160),
    (16800.0, 2160),
];

pub fn hls_resolution(tb: f64) -> Option<u32> {
    HLS_TEMPLATE.iter().find(|(t, _)| *t == tb).map(|&(_, r)| r)
}

fn check_grid(space: &ConfigSpace, outcomes: &[EncodingOutcome]) -> Result<()> {
    if outcomes.len() != space.n_actions() {
        return Err(Error::Data(format!(
            "outcome table has {} entries, action space has {}",
            outcomes.len(),
            space.n_actions()
        )));
    }
    Ok(())
}

fn rung(space: &ConfigSpace, outcomes: &[EncodingOutcome], tb: f64, idx: usize, flags: RungFlags) -> LadderRung {
    let a = space.action(idx);
    LadderRung {
        tb,
        resolution: a.resolution,
        qp: a.qp,
        predicted: outcomes[idx],
        flags,
    }
}

/// Cheapest action by bitrate; ties go to the lower action index.
pub(crate) fn min_bitrate_action(candidates: impl Iterator<Item = usize>, outcomes: &[EncodingOutcome]) -> usize {
    candidates
        .min_by(|&a, &b| {
            outcomes[a]
                .bitrate_kbps
                .total_cmp(&outcomes[b].bitrate_kbps)
                .then(a.cmp(&b))
        })
        .expect("at least one action")
}

fn feasible(outcomes: &[EncodingOutcome], tb: f64) -> Vec<usize> {
    (0..outcomes.len())
        .filter(|&i| outcomes[i].bitrate_kbps <= tb)
        .collect()
}

/// Best element under `cmp` where `Ordering::Less` means "better"; ties
/// beyond `cmp` go to the lower index.
fn best_by(cands: &[usize], mut cmp: impl FnMut(usize, usize) -> Ordering) -> Option<usize> {
    cands.iter().copied().min_by(|&a, &b| cmp(a, b).then(a.cmp(&b)))
}

/// HLS template: fixed resolutions, QP filled up to the rate cap (the
/// lowest QP whose bitrate stays within the target). Without a fitting QP
/// the highest QP is used and the rung flagged.
pub fn hls_ladder(segment_id: &str, space: &ConfigSpace, outcomes: &[EncodingOutcome]) -> Result<Ladder> {
    check_grid(space, outcomes)?;
    let mut rungs = Vec::new();
    for &tb in space.target_bitrates() {
        let r = hls_resolution(tb)
            .ok_or_else(|| Error::Config(format!("target {tb} kbps is not part of the HLS template")))?;
        if !space.resolutions().contains(&r) {
            return Err(Error::Config(format!("HLS resolution {r} not in the configured space")));
        }
        let qps = space.qps();
        let idx = |qp| {
            space
                .action_index(crate::Action { resolution: r, qp })
                .expect("in space")
        };
        let pick = qps.iter().map(|&qp| idx(qp)).find(|&i| outcomes[i].bitrate_kbps <= tb);
        let (i, flags) = match pick {
            Some(i) => (i, RungFlags::default()),
            None => (
                idx(*qps.last().expect("non-empty")),
                RungFlags {
                    bitrate_infeasible: true,
                    ..Default::default()
                },
            ),
        };
        rungs.push(rung(space, outcomes, tb, i, flags));
    }
    Ok(Ladder {
        segment_id: segment_id.to_string(),
        rungs,
    })
}

/// Highest quality within the bitrate cap and decoding-time limit `tau`;
/// ties go to lower decoding time, then lower resolution. Rungs with no
/// action under `tau` drop the time limit (flagged).
pub fn cdbl_ladder(segment_id: &str, space: &ConfigSpace, outcomes: &[EncodingOutcome], tau: f64) -> Result<Ladder> {
    check_grid(space, outcomes)?;
    let better = |a: usize, b: usize| {
        let (x, y) = (&outcomes[a], &outcomes[b]);
        y.quality
            .total_cmp(&x.quality)
            .then(x.dec_time_s.total_cmp(&y.dec_time_s))
            .then(space.action(a).resolution.cmp(&space.action(b).resolution))
    };
    let mut rungs = Vec::new();
    for &tb in space.target_bitrates() {
        let fb = feasible(outcomes, tb);
        let timed: Vec<usize> = fb.iter().copied().filter(|&i| outcomes[i].dec_time_s <= tau).collect();
        let (i, flags) = if let Some(i) = best_by(&timed, better) {
            (i, RungFlags::default())
        } else if let Some(i) = best_by(&fb, better) {
            (
                i,
                RungFlags {
                    relaxed_dec_time: true,
                    ..Default::default()
                },
            )
        } else {
            (
                min_bitrate_action(0..outcomes.len(), outcomes),
                RungFlags {
                    bitrate_infeasible: true,
                    relaxed_dec_time: true,
                    ..Default::default()
                },
            )
        };
        rungs.push(rung(space, outcomes, tb, i, flags));
    }
    Ok(Ladder {
        segment_id: segment_id.to_string(),
        rungs,
    })
}

/// Minimise `alpha * t + (1 - alpha) * b` with decoding time and bitrate
/// min-max normalised over the rung's feasible set. Quality is ignored.
pub fn rqtpf_ladder(segment_id: &str, space: &ConfigSpace, outcomes: &[EncodingOutcome], alpha: f64) -> Result<Ladder> {
    check_grid(space, outcomes)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let mut rungs = Vec::new();
    for &tb in space.target_bitrates() {
        let fb = feasible(outcomes, tb);
        let (i, flags) = if fb.is_empty() {
            (
                min_bitrate_action(0..outcomes.len(), outcomes),
                RungFlags {
                    bitrate_infeasible: true,
                    ..Default::default()
                },
            )
        } else {
            let span = |f: fn(&EncodingOutcome) -> f64| {
                fb.iter()
                    .map(|&i| f(&outcomes[i]))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
            };
            let (t_lo, t_hi) = span(|o| o.dec_time_s);
            let (b_lo, b_hi) = span(|o| o.bitrate_kbps);
            let cost = |i: usize| {
                let o = &outcomes[i];
                alpha * super::min_max(o.dec_time_s, t_lo, t_hi)
                    + (1.0 - alpha) * super::min_max(o.bitrate_kbps, b_lo, b_hi)
            };
            let i = best_by(&fb, |a, b| cost(a).total_cmp(&cost(b))).expect("non-empty");
            (i, RungFlags::default())
        };
        rungs.push(rung(space, outcomes, tb, i, flags));
    }
    Ok(Ladder {
        segment_id: segment_id.to_string(),
        rungs,
    })
}

/// Highest quality within the bitrate cap, ties to lower bitrate, keeping
/// quality nondecreasing along the ladder.
pub fn vexus_ladder(segment_id: &str, space: &ConfigSpace, outcomes: &[EncodingOutcome]) -> Result<Ladder> {
    check_grid(space, outcomes)?;
    let better = |a: usize, b: usize| {
        outcomes[b]
            .quality
            .total_cmp(&outcomes[a].quality)
            .then(outcomes[a].bitrate_kbps.total_cmp(&outcomes[b].bitrate_kbps))
    };
    let mut rungs: Vec<LadderRung> = Vec::new();
    for &tb in space.target_bitrates() {
        let fb = feasible(outcomes, tb);
        let prev_q = rungs.last().map(|r| r.predicted.quality);
        let mono: Vec<usize> = fb
            .iter()
            .copied()
            .filter(|&i| prev_q.is_none_or(|q| outcomes[i].quality >= q))
            .collect();
        let (i, flags) = if let Some(i) = best_by(&mono, better) {
            (i, RungFlags::default())
        } else if let Some(i) = best_by(&fb, better) {
            (
                i,
                RungFlags {
                    relaxed_monotonicity: true,
                    ..Default::default()
                },
            )
        } else {
            (
                min_bitrate_action(0..outcomes.len(), outcomes),
                RungFlags {
                    bitrate_infeasible: true,
                    ..Default::default()
                },
            )
        };
        rungs.push(rung(space, outcomes, tb, i, flags));
    }
    Ok(Ladder {
        segment_id: segment_id.to_string(),
        rungs,
    })
}

/// Per rung, the action maximising the immediate reward among actions that
/// meet the bitrate cap and keep quality nondecreasing. Quality and decoding
/// time are normalised over that rung's candidate set. Falls back to
/// dropping monotonicity, then to the cheapest action, flagging either.
pub fn greedy_oracle_ladder(
    segment_id: &str,
    space: &ConfigSpace,
    outcomes: &[EncodingOutcome],
    weights: &RewardWeights,
    policy: PenaltyPolicy,
) -> Result<Ladder> {
    check_grid(space, outcomes)?;
    let range = space.resolution_range();
    let mut rungs: Vec<LadderRung> = Vec::new();
    let mut history: Vec<u32> = Vec::new();
    for &tb in space.target_bitrates() {
        let fb = feasible(outcomes, tb);
        let prev_q = rungs.last().map(|r| r.predicted.quality);
        let mono: Vec<usize> = fb
            .iter()
            .copied()
            .filter(|&i| prev_q.is_none_or(|q| outcomes[i].quality >= q))
            .collect();
        let (cands, mut flags) = if !mono.is_empty() {
            (mono, RungFlags::default())
        } else {
            (
                fb,
                RungFlags {
                    relaxed_monotonicity: true,
                    ..Default::default()
                },
            )
        };
        let i = if cands.is_empty() {
            flags.bitrate_infeasible = true;
            min_bitrate_action(0..outcomes.len(), outcomes)
        } else {
            let bounds = RewardBounds::from_outcomes(cands.iter().map(|&i| &outcomes[i]))?;
            let value = |i: usize| {
                let o = &outcomes[i];
                reward(
                    o.quality,
                    o.dec_time_s,
                    space.action(i).resolution,
                    &history,
                    &bounds,
                    weights,
                    policy,
                    range,
                )
                .total
            };
            best_by(&cands, |a, b| value(b).total_cmp(&value(a))).expect("non-empty")
        };
        let r = rung(space, outcomes, tb, i, flags);
        history.push(r.resolution);
        rungs.push(r);
    }
    Ok(Ladder {
        segment_id: segment_id.to_string(),
        rungs,
    })
}
