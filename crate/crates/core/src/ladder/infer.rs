use web_time::Instant;

use super::baselines::min_bitrate_action;
use crate::domain::{EncodingOutcome, Ladder, LadderRung, RungFlags, SegmentFeatures};
use crate::environment::Perturber;
use crate::predictors::PredictorSet;
use crate::qnet::{masked_argmax, Agent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub ladder: Ladder,
    /// Wall time for prediction plus the greedy pass.
    pub elapsed_s: f64,
}

/// Predicted outcome for every action of the agent's space.
pub fn predict_grid(predictors: &PredictorSet, agent: &Agent, seg: &SegmentFeatures) -> Result<Vec<EncodingOutcome>> {
    if predictors.metric != agent.metric {
        return Err(Error::Config(format!(
            "agent optimises {} but predictors estimate {}",
            agent.metric, predictors.metric
        )));
    }
    Ok(agent.space.actions().map(|a| predictors.predict(seg, a)).collect())
}

/// Build a ladder from the agent's greedy choices over predicted outcomes.
pub fn infer_ladder(
    agent: &Agent,
    predictors: &PredictorSet,
    seg: &SegmentFeatures,
    noise: Option<&mut Perturber>,
) -> Result<Inference> {
    let start = Instant::now();
    let grid = predict_grid(predictors, agent, seg)?;
    let mut inf = infer_from_outcomes(agent, &seg.segment_id, &grid, noise)?;
    inf.elapsed_s = start.elapsed().as_secs_f64();
    Ok(inf)
}

/// Greedy rollout over a table of predicted outcomes (indexed by action).
///
/// An action is admissible when its predicted bitrate meets the rung target
/// and its predicted quality is no lower than the previous rung's. If no
/// action qualifies, monotonicity is dropped; if still none, the cheapest
/// action is taken. Both fallbacks are flagged on the rung. With `noise`,
/// every rung draws fresh noise for every action's prediction.
pub fn infer_from_outcomes(
    agent: &Agent,
    segment_id: &str,
    predicted: &[EncodingOutcome],
    mut noise: Option<&mut Perturber>,
) -> Result<Inference> {
    let start = Instant::now();
    let space = &agent.space;
    if predicted.len() != space.n_actions() {
        return Err(Error::Data("prediction table does not match the action space".into()));
    }
    let [mut pb, mut pq, mut pt] = agent.state_bounds.sentinel();
    let mut prev_quality: Option<f64> = None;
    let mut rungs = Vec::with_capacity(space.target_bitrates().len());
    let mut view = predicted.to_vec();
    for &tb in space.target_bitrates() {
        if let Some(p) = noise.as_deref_mut() {
            for (v, o) in view.iter_mut().zip(predicted) {
                *v = p.apply(*o);
            }
        }
        let q = agent.q_values(&[tb, pb, pq, pt])?;
        let within: Vec<usize> = (0..view.len()).filter(|&i| view[i].bitrate_kbps <= tb).collect();
        let mono: Vec<usize> = within
            .iter()
            .copied()
            .filter(|&i| prev_quality.is_none_or(|pq| view[i].quality >= pq))
            .collect();
        let mut flags = RungFlags::default();
        let idx = if let Some(i) = masked_argmax(&q, &mono) {
            i
        } else if let Some(i) = masked_argmax(&q, &within) {
            flags.relaxed_monotonicity = true;
            i
        } else {
            flags.bitrate_infeasible = true;
            min_bitrate_action(0..view.len(), &view)
        };
        let o = view[idx];
        let a = space.action(idx);
        rungs.push(LadderRung {
            tb,
            resolution: a.resolution,
            qp: a.qp,
            predicted: o,
            flags,
        });
        pb = o.bitrate_kbps;
        pq = o.quality;
        pt = o.dec_time_s;
        prev_quality = Some(o.quality);
    }
    Ok(Inference {
        ladder: Ladder {
            segment_id: segment_id.to_string(),
            rungs,
        },
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
