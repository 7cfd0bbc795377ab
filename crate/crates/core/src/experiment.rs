//! Pipeline steps shared by the command-line tool, the browser demo and the
//! acceptance suite: predictor training, agent training, ladder
//! construction, evaluation against the HLS template, and noise sweeps.

use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::bd::{compare_ladders, ComparisonReport};
use crate::domain::{ConfigSpace, EncodingOutcome, Ladder, QualityMetric, RewardWeights, SegmentFeatures};
use crate::environment::{Environment, MeasurementLog, OutcomeGrid, Perturber};
use crate::ladder::{
    cdbl_ladder, greedy_oracle_ladder, hls_ladder, infer_from_outcomes, rqtpf_ladder, vexus_ladder, Method,
    PenaltyPolicy,
};
use crate::predictors::{grid_search, split_segments, Dataset, ForestParams, GridSearchResult, PredictorSet, Target};
use crate::qnet::{train, Agent, DqnConfig, TrainOutcome, TrainSetup};
use crate::rng::{derive_seed, hash_str};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Decoding-time limit of the CDBL-style baseline, seconds.
    pub tau: f64,
    /// Decoding-time weight of the RQT-PF-style baseline.
    pub alpha: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { tau: 16.0, alpha: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub forest: ForestParams,
    pub train_frac: f64,
    pub k_folds: usize,
    pub sweep_trees: Vec<usize>,
    pub sweep_depths: Vec<usize>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            train_frac: 0.7,
            k_folds: 5,
            sweep_trees: vec![50, 100, 200, 300],
            sweep_depths: vec![3, 5, 7, 10],
        }
    }
}

impl PredictorConfig {
    pub fn sweep_grid(&self) -> Vec<ForestParams> {
        self.sweep_trees
            .iter()
            .flat_map(|&n| {
                self.sweep_depths.iter().map(move |&d| ForestParams {
                    n_trees: n,
                    max_depth: d,
                    ..self.forest
                })
            })
            .collect()
    }
}

/// Held-out scores for one target. Inference time is kept apart from the
/// deterministic columns so metric files stay byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetMetrics {
    pub target: String,
    pub n_trees: usize,
    pub max_depth: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub r2: Option<f64>,
    pub rmse: f64,
    pub sdae: f64,
    pub mae_pct: f64,
    #[serde(skip)]
    pub inference_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct PredictorTraining {
    pub predictors: PredictorSet,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// dec_time, quality, bitrate, in that order.
    pub metrics: Vec<TargetMetrics>,
    /// Cross-validation tables, present when a sweep was requested.
    pub sweeps: Vec<(Target, GridSearchResult)>,
}

/// Fit the three predictors on a segment-level split of `log` and score
/// them on the held-out segments. With `sweep`, each target's ensemble
/// size and depth are chosen by k-fold cross-validation on the training
/// segments first.
pub fn train_predictors(
    log: &MeasurementLog,
    metric: QualityMetric,
    cfg: &PredictorConfig,
    seed: u64,
    sweep: bool,
) -> Result<PredictorTraining> {
    cfg.forest.validate()?;
    let ids: Vec<String> = log.segments().iter().map(|s| s.segment_id.clone()).collect();
    let (train_ids, test_ids) = split_segments(&ids, cfg.train_frac, seed)?;
    let targets = [Target::DecTime, Target::Quality(metric), Target::Bitrate];

    let mut models = Vec::with_capacity(3);
    let mut metrics = Vec::with_capacity(3);
    let mut sweeps = Vec::new();
    for (k, &target) in targets.iter().enumerate() {
        let full = Dataset::from_log(log, target);
        let (train_set, test_set) = (full.select(&train_ids), full.select(&test_ids));
        let params = if sweep {
            let res = grid_search(
                &train_set,
                &cfg.sweep_grid(),
                cfg.k_folds,
                derive_seed(seed, 0x5EE9 + k as u64),
            )?;
            let best = res.best;
            sweeps.push((target, res));
            best
        } else {
            cfg.forest
        };
        let model = train_set.fit(params, derive_seed(seed, k as u64 + 1))?;
        let m = test_set.evaluate(&model)?;
        metrics.push(TargetMetrics {
            target: target.to_string(),
            n_trees: params.n_trees,
            max_depth: params.max_depth,
            train_rows: train_set.len(),
            test_rows: test_set.len(),
            r2: m.r2,
            rmse: m.rmse,
            sdae: m.sdae,
            mae_pct: m.mae_pct,
            inference_time_s: m.inference_time_s,
        });
        models.push(model);
    }
    let bitrate = models.pop().expect("three models");
    let quality = models.pop().expect("three models");
    let dec_time = models.pop().expect("three models");
    Ok(PredictorTraining {
        predictors: PredictorSet::new(metric, dec_time, quality, bitrate),
        train_ids,
        test_ids,
        metrics,
        sweeps,
    })
}

/// Train an agent over every segment of `log`.
pub fn train_agent(
    log: &MeasurementLog,
    metric: QualityMetric,
    weights: RewardWeights,
    penalty: PenaltyPolicy,
    cfg: &DqnConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let setup = TrainSetup {
        env: log,
        corpus: log.segments(),
        space: log.space(),
        metric,
        weights,
        penalty,
    };
    train(&setup, cfg, seed)
}

/// Predicted outcome of every action in `space`, indexed by action.
pub fn predicted_grid(predictors: &PredictorSet, space: &ConfigSpace, seg: &SegmentFeatures) -> Vec<EncodingOutcome> {
    space.actions().map(|a| predictors.predict(seg, a)).collect()
}

/// Wall-clock accounting of one agent ladder, milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildTiming {
    pub segment_id: String,
    pub feature_load_ms: f64,
    pub prediction_ms: f64,
    pub decision_ms: f64,
    pub decision_ms_per_rung: f64,
}

#[derive(Debug, Clone)]
pub struct BuiltLadders {
    pub ladders: Vec<Ladder>,
    pub timing: Vec<BuildTiming>,
}

fn check_compatible(agent: &Agent, predictors: &PredictorSet) -> Result<()> {
    if agent.metric != predictors.metric {
        return Err(Error::Config(format!(
            "agent optimises {} but predictors estimate {}",
            agent.metric, predictors.metric
        )));
    }
    Ok(())
}

/// Agent ladders for `segment_ids`, features looked up in `log`.
pub fn build_ladders(
    agent: &Agent,
    predictors: &PredictorSet,
    log: &MeasurementLog,
    segment_ids: &[String],
) -> Result<BuiltLadders> {
    check_compatible(agent, predictors)?;
    let mut ladders = Vec::with_capacity(segment_ids.len());
    let mut timing = Vec::with_capacity(segment_ids.len());
    for id in segment_ids {
        let t0 = Instant::now();
        let seg = log
            .segment(id)
            .ok_or_else(|| Error::UnknownSegment(id.clone()))?
            .clone();
        seg.validate()?;
        let t1 = Instant::now();
        let grid = predicted_grid(predictors, &agent.space, &seg);
        let t2 = Instant::now();
        let inf = infer_from_outcomes(agent, id, &grid, None)?;
        let t3 = Instant::now();
        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
        let rungs = inf.ladder.rungs.len().max(1) as f64;
        timing.push(BuildTiming {
            segment_id: id.clone(),
            feature_load_ms: ms(t0, t1),
            prediction_ms: ms(t1, t2),
            decision_ms: ms(t2, t3),
            decision_ms_per_rung: ms(t2, t3) / rungs,
        });
        ladders.push(inf.ladder);
    }
    Ok(BuiltLadders { ladders, timing })
}

/// Ladders of one method over a set of segments.
#[derive(Debug, Clone)]
pub struct MethodLadders {
    pub label: String,
    pub method: Method,
    pub ladders: Vec<Ladder>,
}

fn per_segment(
    segments: &[SegmentFeatures],
    grids: &[Vec<EncodingOutcome>],
    f: impl Fn(&str, &[EncodingOutcome]) -> Result<Ladder>,
) -> Result<Vec<Ladder>> {
    if segments.len() != grids.len() {
        return Err(Error::Invariant("one outcome table per segment expected".into()));
    }
    segments.iter().zip(grids).map(|(s, g)| f(&s.segment_id, g)).collect()
}

/// HLS template ladders with QPs filled from the given outcome tables.
pub fn hls_ladders(
    space: &ConfigSpace,
    segments: &[SegmentFeatures],
    grids: &[Vec<EncodingOutcome>],
) -> Result<MethodLadders> {
    Ok(MethodLadders {
        label: "hls".into(),
        method: Method::Hls,
        ladders: per_segment(segments, grids, |id, g| hls_ladder(id, space, g))?,
    })
}

/// The CDBL-, RQT-PF- and VEXUS-style baselines over the given tables.
pub fn baseline_ladders(
    space: &ConfigSpace,
    segments: &[SegmentFeatures],
    grids: &[Vec<EncodingOutcome>],
    params: &BaselineParams,
) -> Result<Vec<MethodLadders>> {
    Ok(vec![
        MethodLadders {
            label: "cdbl".into(),
            method: Method::Cdbl { tau: params.tau },
            ladders: per_segment(segments, grids, |id, g| cdbl_ladder(id, space, g, params.tau))?,
        },
        MethodLadders {
            label: "rqtpf".into(),
            method: Method::Rqtpf { alpha: params.alpha },
            ladders: per_segment(segments, grids, |id, g| rqtpf_ladder(id, space, g, params.alpha))?,
        },
        MethodLadders {
            label: "vexus".into(),
            method: Method::Vexus,
            ladders: per_segment(segments, grids, |id, g| vexus_ladder(id, space, g))?,
        },
    ])
}

/// Aggregate row per method: BD deltas against the reference plus plain
/// ladder means, all on measured outcomes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub bd_rate_pct: Option<f64>,
    pub bd_metric: Option<f64>,
    pub bd_entime_s: Option<f64>,
    pub bd_detime_s: Option<f64>,
    pub switch_score: f64,
    pub mean_quality: f64,
    pub mean_dec_time_s: f64,
    pub mean_bitrate_kbps: f64,
    pub violation_rate: f64,
    pub flagged_rate: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metric: QualityMetric,
    pub summary: Vec<MethodSummary>,
    /// Per-segment detail of each method against the reference.
    pub reports: Vec<(String, ComparisonReport)>,
}

impl Evaluation {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|m| m.method == label)
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        crate::io::csv_bytes(&self.summary)
    }
}

/// Measured per-rung averages of quality, decoding time and bitrate.
fn measured_means(
    env: &dyn Environment,
    segments: &[SegmentFeatures],
    ladders: &[Ladder],
    metric: QualityMetric,
) -> Result<(f64, f64, f64)> {
    let (mut q, mut t, mut b, mut n) = (0.0, 0.0, 0.0, 0usize);
    for l in ladders {
        let seg = segments
            .iter()
            .find(|s| s.segment_id == l.segment_id)
            .ok_or_else(|| Error::UnknownSegment(l.segment_id.clone()))?;
        for r in &l.rungs {
            let o = env.measure(seg, r.action(), metric)?;
            q += o.quality;
            t += o.dec_time_s;
            b += o.bitrate_kbps;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Data("no rungs to evaluate".into()));
    }
    let n = n as f64;
    Ok((q / n, t / n, b / n))
}

/// Score every method against `reference` on measured outcomes.
pub fn evaluate_methods(
    env: &dyn Environment,
    segments: &[SegmentFeatures],
    space: &ConfigSpace,
    metric: QualityMetric,
    reference: &[Ladder],
    methods: &[MethodLadders],
) -> Result<Evaluation> {
    let mut summary = Vec::with_capacity(methods.len());
    let mut reports = Vec::with_capacity(methods.len());
    for m in methods {
        let report = compare_ladders(env, segments, reference, &m.ladders, metric, space)?;
        let (q, t, b) = measured_means(env, segments, &m.ladders, metric)?;
        let rungs: usize = m.ladders.iter().map(|l| l.rungs.len()).sum();
        let flagged: usize = m.ladders.iter().map(Ladder::flagged_rungs).sum();
        summary.push(MethodSummary {
            method: m.label.clone(),
            bd_rate_pct: report.mean.bd_rate_pct,
            bd_metric: report.mean.bd_metric,
            bd_entime_s: report.mean.bd_entime_s,
            bd_detime_s: report.mean.bd_detime_s,
            switch_score: report.mean.switch_b,
            mean_quality: q,
            mean_dec_time_s: t,
            mean_bitrate_kbps: b,
            violation_rate: report.mean.violations_b,
            flagged_rate: flagged as f64 / rungs.max(1) as f64,
        });
        reports.push((m.label.clone(), report));
    }
    Ok(Evaluation {
        metric,
        summary,
        reports,
    })
}

/// Every ladder the evaluation compares, built for the segments of `log`.
#[derive(Debug, Clone)]
pub struct MethodSet {
    pub segments: Vec<SegmentFeatures>,
    /// Predicted outcome tables, one per segment.
    pub predicted: Vec<Vec<EncodingOutcome>>,
    /// Measured outcome tables, one per segment.
    pub measured: Vec<Vec<EncodingOutcome>>,
    pub methods: Vec<MethodLadders>,
}

impl MethodSet {
    pub fn get(&self, label: &str) -> Option<&MethodLadders> {
        self.methods.iter().find(|m| m.label == label)
    }
}

/// Build the agent ladders and all baselines. The agent and the CDBL-,
/// RQT-PF- and VEXUS-style baselines see the same predicted outcomes; the
/// HLS reference and the greedy oracle are filled from measurements.
pub fn build_methods(
    log: &MeasurementLog,
    agent: &Agent,
    predictors: &PredictorSet,
    params: &BaselineParams,
) -> Result<MethodSet> {
    check_compatible(agent, predictors)?;
    let space = &agent.space;
    if space != log.space() {
        return Err(Error::Config(
            "agent and measurement log use different configuration spaces".into(),
        ));
    }
    let segments = log.segments().to_vec();
    let predicted: Vec<Vec<EncodingOutcome>> = segments.iter().map(|s| predicted_grid(predictors, space, s)).collect();
    let measured: Vec<Vec<EncodingOutcome>> = segments
        .iter()
        .map(|s| Ok(OutcomeGrid::measure(log, s, space, agent.metric)?.outcomes))
        .collect::<Result<_>>()?;
    let agent_ladders = per_segment(&segments, &predicted, |id, g| {
        Ok(infer_from_outcomes(agent, id, g, None)?.ladder)
    })?;
    let mut methods = vec![
        MethodLadders {
            label: "agent".into(),
            method: Method::Agent {
                weights: agent.weights,
                penalty: agent.penalty,
            },
            ladders: agent_ladders,
        },
        hls_ladders(space, &segments, &measured)?,
    ];
    methods.extend(baseline_ladders(space, &segments, &predicted, params)?);
    methods.push(MethodLadders {
        label: "greedy-oracle".into(),
        method: Method::GreedyOracle {
            weights: agent.weights,
            penalty: agent.penalty,
        },
        ladders: per_segment(&segments, &measured, |id, g| {
            greedy_oracle_ladder(id, space, g, &agent.weights, agent.penalty)
        })?,
    });
    Ok(MethodSet {
        segments,
        predicted,
        measured,
        methods,
    })
}

/// Build every method and score it against the HLS template.
pub fn evaluate_pipeline(
    log: &MeasurementLog,
    agent: &Agent,
    predictors: &PredictorSet,
    params: &BaselineParams,
) -> Result<(MethodSet, Evaluation)> {
    let set = build_methods(log, agent, predictors, params)?;
    let reference = &set.get("hls").expect("hls is always built").ladders;
    let eval = evaluate_methods(log, &set.segments, log.space(), agent.metric, reference, &set.methods)?;
    Ok((set, eval))
}

const AGENT_NOISE_STREAM: u64 = 0xA6E7;
const CDBL_NOISE_STREAM: u64 = 0xCDB1;

/// Noise source for one (method, segment) pair. The same draws are scaled
/// by every noise level, so levels differ only in magnitude.
fn perturber(
    noise_pct: f64,
    metric: QualityMetric,
    seed: u64,
    method_stream: u64,
    segment_id: &str,
) -> Result<Perturber> {
    Perturber::new(
        noise_pct,
        metric,
        derive_seed(derive_seed(seed, method_stream), hash_str(segment_id)),
    )
}

/// CDBL-style ladder where every rung sees a fresh noisy copy of the table.
fn noisy_cdbl(
    space: &ConfigSpace,
    segment_id: &str,
    predicted: &[EncodingOutcome],
    tau: f64,
    noise: &mut Perturber,
) -> Result<Ladder> {
    let mut rungs = Vec::with_capacity(space.target_bitrates().len());
    for i in 0..space.target_bitrates().len() {
        let table: Vec<EncodingOutcome> = predicted.iter().map(|o| noise.apply(*o)).collect();
        rungs.push(cdbl_ladder(segment_id, space, &table, tau)?.rungs.swap_remove(i));
    }
    Ok(Ladder {
        segment_id: segment_id.into(),
        rungs,
    })
}

/// BD deltas of one method at one noise level and seed, against the
/// noiseless HLS reference. `delta_*` is the change from noise level 0 at
/// the same seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub method: String,
    pub noise_pct: f64,
    pub seed: u64,
    pub bd_rate_pct: Option<f64>,
    pub bd_metric: Option<f64>,
    pub delta_bd_rate_pct: Option<f64>,
    pub delta_bd_metric: Option<f64>,
}

/// Mean and population standard deviation over seeds of the defined values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessAggregate {
    pub method: String,
    pub noise_pct: f64,
    pub seeds: usize,
    pub bd_rate_mean: Option<f64>,
    pub bd_rate_std: Option<f64>,
    pub bd_metric_mean: Option<f64>,
    pub bd_metric_std: Option<f64>,
    pub delta_bd_rate_mean: Option<f64>,
    pub delta_bd_rate_std: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Robustness {
    pub rows: Vec<RobustnessRow>,
    pub aggregate: Vec<RobustnessAggregate>,
}

impl Robustness {
    pub fn aggregate_for(&self, method: &str, noise_pct: f64) -> Option<&RobustnessAggregate> {
        self.aggregate
            .iter()
            .find(|a| a.method == method && a.noise_pct == noise_pct)
    }
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

/// Perturb predicted quality and decoding time feeding the agent and the
/// CDBL-style baseline, for every noise level and seed. Level 0 is always
/// evaluated, as the anchor for the deltas.
pub fn robustness(
    log: &MeasurementLog,
    agent: &Agent,
    predictors: &PredictorSet,
    params: &BaselineParams,
    noise_levels: &[f64],
    seeds: &[u64],
) -> Result<Robustness> {
    if seeds.is_empty() {
        return Err(Error::Config("robustness sweep needs at least one seed".into()));
    }
    let mut levels: Vec<f64> = vec![0.0];
    for &l in noise_levels {
        if !(0.0..=0.5).contains(&l) {
            return Err(Error::Config(format!("noise level {l} outside [0, 0.5]")));
        }
        if !levels.contains(&l) {
            levels.push(l);
        }
    }
    let set = build_methods(log, agent, predictors, params)?;
    let reference = &set.get("hls").expect("hls is always built").ladders;
    let space = &agent.space;
    let metric = agent.metric;

    let mut rows = Vec::new();
    for &seed in seeds {
        let mut anchors: Vec<(Option<f64>, Option<f64>)> = Vec::new();
        for &level in &levels {
            let mut agent_ladders = Vec::with_capacity(set.segments.len());
            let mut cdbl = Vec::with_capacity(set.segments.len());
            for (s, g) in set.segments.iter().zip(&set.predicted) {
                let mut pa = perturber(level, metric, seed, AGENT_NOISE_STREAM, &s.segment_id)?;
                agent_ladders.push(infer_from_outcomes(agent, &s.segment_id, g, Some(&mut pa))?.ladder);
                let mut pc = perturber(level, metric, seed, CDBL_NOISE_STREAM, &s.segment_id)?;
                cdbl.push(noisy_cdbl(space, &s.segment_id, g, params.tau, &mut pc)?);
            }
            for (k, (label, ladders)) in [("agent", agent_ladders), ("cdbl", cdbl)].into_iter().enumerate() {
                let rep = compare_ladders(log, &set.segments, reference, &ladders, metric, space)?;
                let (rate, bdm) = (rep.mean.bd_rate_pct, rep.mean.bd_metric);
                if level == 0.0 {
                    anchors.push((rate, bdm));
                }
                let (r0, m0) = anchors[k];
                rows.push(RobustnessRow {
                    method: label.into(),
                    noise_pct: level,
                    seed,
                    bd_rate_pct: rate,
                    bd_metric: bdm,
                    delta_bd_rate_pct: rate.zip(r0).map(|(a, b)| a - b),
                    delta_bd_metric: bdm.zip(m0).map(|(a, b)| a - b),
                });
            }
        }
    }

    let mut aggregate = Vec::new();
    for label in ["agent", "cdbl"] {
        for &level in &levels {
            let sel: Vec<&RobustnessRow> = rows
                .iter()
                .filter(|r| r.method == label && r.noise_pct == level)
                .collect();
            let col = |f: fn(&RobustnessRow) -> Option<f64>| sel.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let (rm, rs) = mean_std(&col(|r| r.bd_rate_pct));
            let (mm, ms) = mean_std(&col(|r| r.bd_metric));
            let (dm, ds) = mean_std(&col(|r| r.delta_bd_rate_pct));
            aggregate.push(RobustnessAggregate {
                method: label.into(),
                noise_pct: level,
                seeds: sel.len(),
                bd_rate_mean: rm,
                bd_rate_std: rs,
                bd_metric_mean: mm,
                bd_metric_std: ms,
                delta_bd_rate_mean: dm,
                delta_bd_rate_std: ds,
            });
        }
    }
    Ok(Robustness { rows, aggregate })
}
