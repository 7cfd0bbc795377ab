//! WebAssembly front end for the ladder pipeline. Each export takes and
//! returns JSON so the page needs no bindings beyond strings.
//!
//! The demo runs on the synthetic corpus and decides on measured outcome
//! tables, skipping the predictors to stay fast in the browser.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use ladderq_core::bd::{bd_metric, bd_rate, RdCurve};
use ladderq_core::environment::{generate_synthetic_corpus, MeasurementLog, OutcomeGrid};
use ladderq_core::experiment::{baseline_ladders, evaluate_methods, hls_ladders, BaselineParams, MethodLadders};
use ladderq_core::ladder::{greedy_oracle_ladder, infer_from_outcomes, Method, PenaltyPolicy};
use ladderq_core::qnet::{train, DqnConfig, TrainSetup};
use ladderq_core::{EncodingOutcome, Ladder, QualityMetric, RewardWeights, SegmentFeatures};

const MAX_SEGMENTS: usize = 12;
const MAX_EPISODES: usize = 400;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareRequest {
    pub seed: u64,
    pub segments: usize,
    /// Segment whose ladders are returned in full.
    pub show: usize,
    pub tau: f64,
    pub alpha: f64,
    pub weights: RewardWeights,
    pub penalty: PenaltyPolicy,
}

impl Default for CompareRequest {
    fn default() -> Self {
        let b = BaselineParams::default();
        Self {
            seed: 1,
            segments: 6,
            show: 0,
            tau: b.tau,
            alpha: b.alpha,
            weights: RewardWeights::default(),
            penalty: PenaltyPolicy::Fixed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRequest {
    pub seed: u64,
    pub segments: usize,
    pub episodes: usize,
    pub weights: RewardWeights,
    pub penalty: PenaltyPolicy,
}

impl Default for TrainRequest {
    fn default() -> Self {
        Self {
            seed: 1,
            segments: 3,
            episodes: 60,
            weights: RewardWeights::default(),
            penalty: PenaltyPolicy::Fixed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RungView {
    pub tb: f64,
    pub resolution: u32,
    pub qp: u32,
    pub bitrate_kbps: f64,
    pub quality: f64,
    pub dec_time_s: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodView {
    pub method: String,
    pub bd_rate_pct: Option<f64>,
    pub bd_metric: Option<f64>,
    pub mean_quality: f64,
    pub mean_dec_time_s: f64,
    pub switch_score: f64,
    /// Ladder of the displayed segment.
    pub ladder: Vec<RungView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareResponse {
    pub segment_id: String,
    pub features: [f64; 3],
    pub methods: Vec<MethodView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainResponse {
    pub episodes: usize,
    pub cum_reward: Vec<f64>,
    pub first_decile: f64,
    pub last_decile: f64,
    /// Agent and HLS template alongside, for the first segment.
    pub methods: Vec<MethodView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BdResponse {
    pub bd_rate_pct: f64,
    pub bd_metric: f64,
}

type DemoResult<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Corpus {
    log: MeasurementLog,
    segments: Vec<SegmentFeatures>,
    grids: Vec<Vec<EncodingOutcome>>,
}

fn corpus(n: usize, seed: u64) -> DemoResult<Corpus> {
    if !(1..=MAX_SEGMENTS).contains(&n) {
        return Err(format!("segments must be between 1 and {MAX_SEGMENTS}"));
    }
    let (segments, log) = generate_synthetic_corpus(n, seed).map_err(err)?;
    let grids = segments
        .iter()
        .map(|s| Ok(OutcomeGrid::measure(&log, s, log.space(), QualityMetric::Xpsnr)?.outcomes))
        .collect::<ladderq_core::Result<Vec<_>>>()
        .map_err(err)?;
    Ok(Corpus { log, segments, grids })
}

fn rung_views(ladder: &Ladder) -> Vec<RungView> {
    ladder
        .rungs
        .iter()
        .map(|r| RungView {
            tb: r.tb,
            resolution: r.resolution,
            qp: r.qp,
            bitrate_kbps: r.predicted.bitrate_kbps,
            quality: r.predicted.quality,
            dec_time_s: r.predicted.dec_time_s,
            flagged: r.flags.any(),
        })
        .collect()
}

fn views(c: &Corpus, methods: &[MethodLadders], show: usize) -> DemoResult<Vec<MethodView>> {
    let reference = &methods
        .iter()
        .find(|m| m.label == "hls")
        .ok_or("the HLS reference is missing")?
        .ladders;
    let space = c.log.space();
    let eval = evaluate_methods(&c.log, &c.segments, space, QualityMetric::Xpsnr, reference, methods).map_err(err)?;
    methods
        .iter()
        .map(|m| {
            let s = eval.method(&m.label).ok_or("method missing from evaluation")?;
            Ok(MethodView {
                method: m.label.clone(),
                bd_rate_pct: s.bd_rate_pct,
                bd_metric: s.bd_metric,
                mean_quality: s.mean_quality,
                mean_dec_time_s: s.mean_dec_time_s,
                switch_score: s.switch_score,
                ladder: rung_views(&m.ladders[show]),
            })
        })
        .collect()
}

/// HLS, CDBL-, RQT-PF- and VEXUS-style baselines and the greedy oracle on
/// a fresh synthetic corpus, scored against HLS.
pub fn compare(req: &CompareRequest) -> DemoResult<CompareResponse> {
    let c = corpus(req.segments, req.seed)?;
    if req.show >= c.segments.len() {
        return Err(format!("segment index {} out of range", req.show));
    }
    let space = c.log.space();
    let params = BaselineParams {
        tau: req.tau,
        alpha: req.alpha,
    };
    let mut methods = vec![hls_ladders(space, &c.segments, &c.grids).map_err(err)?];
    methods.extend(baseline_ladders(space, &c.segments, &c.grids, &params).map_err(err)?);
    let greedy = c
        .segments
        .iter()
        .zip(&c.grids)
        .map(|(s, g)| greedy_oracle_ladder(&s.segment_id, space, g, &req.weights, req.penalty))
        .collect::<ladderq_core::Result<Vec<_>>>()
        .map_err(err)?;
    methods.push(MethodLadders {
        label: "greedy-oracle".into(),
        method: Method::GreedyOracle {
            weights: req.weights,
            penalty: req.penalty,
        },
        ladders: greedy,
    });
    let seg = &c.segments[req.show];
    Ok(CompareResponse {
        segment_id: seg.segment_id.clone(),
        features: [seg.e_y, seg.h, seg.l_y],
        methods: views(&c, &methods, req.show)?,
    })
}

/// Train a small Q-network on a few synthetic segments and build its
/// ladders from the measured tables.
pub fn train_agent(req: &TrainRequest) -> DemoResult<TrainResponse> {
    if !(1..=MAX_EPISODES).contains(&req.episodes) {
        return Err(format!("episodes must be between 1 and {MAX_EPISODES}"));
    }
    req.weights.validate().map_err(err)?;
    let c = corpus(req.segments, req.seed)?;
    let cfg = DqnConfig {
        episodes: req.episodes,
        batch_size: 32,
        replay_capacity: 4000,
        hidden_layers: vec![64, 32],
        ..Default::default()
    };
    let setup = TrainSetup {
        env: &c.log,
        corpus: &c.segments,
        space: c.log.space(),
        metric: QualityMetric::Xpsnr,
        weights: req.weights,
        penalty: req.penalty,
    };
    let out = train(&setup, &cfg, req.seed).map_err(err)?;
    let ladders = c
        .segments
        .iter()
        .zip(&c.grids)
        .map(|(s, g)| Ok(infer_from_outcomes(&out.agent, &s.segment_id, g, None)?.ladder))
        .collect::<ladderq_core::Result<Vec<_>>>()
        .map_err(err)?;
    let methods = vec![
        MethodLadders {
            label: "agent".into(),
            method: Method::Agent {
                weights: req.weights,
                penalty: req.penalty,
            },
            ladders,
        },
        hls_ladders(c.log.space(), &c.segments, &c.grids).map_err(err)?,
    ];
    let cum_reward: Vec<f64> = out.trace.iter().map(|s| s.cum_reward).collect();
    let k = (cum_reward.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(TrainResponse {
        episodes: cum_reward.len(),
        first_decile: mean(&cum_reward[..k]),
        last_decile: mean(&cum_reward[cum_reward.len() - k..]),
        cum_reward,
        methods: views(&c, &methods, 0)?,
    })
}

/// BD-rate and BD-metric of `test` against `reference`, given as
/// `(rate_kbps, quality)` points in any order.
pub fn bd(reference: &[(f64, f64)], test: &[(f64, f64)]) -> DemoResult<BdResponse> {
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a = RdCurve::from_unsorted(reference, max).map_err(err)?;
    let b = RdCurve::from_unsorted(test, max).map_err(err)?;
    Ok(BdResponse {
        bd_rate_pct: bd_rate(&a, &b).map_err(err)?,
        bd_metric: bd_metric(&a, &b).map_err(err)?,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T, JsError> {
    serde_json::from_str(json).map_err(|e| JsError::new(&format!("bad request: {e}")))
}

fn reply<T: Serialize>(r: DemoResult<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = compareBaselines)]
pub fn compare_js(request: &str) -> Result<String, JsError> {
    reply(compare(&parse(request)?))
}

#[wasm_bindgen(js_name = trainAgent)]
pub fn train_js(request: &str) -> Result<String, JsError> {
    reply(train_agent(&parse(request)?))
}

#[derive(Deserialize)]
struct BdRequest {
    reference: Vec<(f64, f64)>,
    test: Vec<(f64, f64)>,
}

#[wasm_bindgen(js_name = bdCurves)]
pub fn bd_js(request: &str) -> Result<String, JsError> {
    let r: BdRequest = parse(request)?;
    reply(bd(&r.reference, &r.test))
}
