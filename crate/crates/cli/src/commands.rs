use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use ladderq_core::bd::{bd_metric, bd_rate, bd_time, RdCurve};
use ladderq_core::environment::{
    generate_synthetic_corpus_with, FeatureRow, MeasurementLog, MeasurementRow, SurrogateParams,
};
use ladderq_core::experiment::{build_ladders, evaluate_pipeline, robustness, train_agent, train_predictors};
use ladderq_core::io::{csv_bytes_with_header, ensure_dir, read_csv, write_atomic, write_csv, write_json};
use ladderq_core::ladder::{LadderDocument, Method};
use ladderq_core::predictors::PredictorSet;
use ladderq_core::qnet::{Agent, TRACE_HEADER};
use ladderq_core::Error;

use crate::config::RunConfig;

type Result<T> = anyhow::Result<T>;

fn snapshot(cfg: &RunConfig, command: &str) -> Result<()> {
    let path = cfg.paths.out.join(format!("{command}.config.toml"));
    write_atomic(&path, cfg.to_toml()?.as_bytes())?;
    Ok(())
}

/// Sidecar describing how the columns of `<name>.csv` were computed.
fn write_meta(out: &Path, name: &str, entries: &[(&str, &str)]) -> Result<()> {
    let map: std::collections::BTreeMap<&str, &str> = entries.iter().copied().collect();
    write_json(&out.join(format!("{name}.meta.json")), &map)?;
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    ensure_dir(&cfg.paths.out)?;
    Ok(())
}

fn load_log(cfg: &RunConfig) -> Result<MeasurementLog> {
    let log = MeasurementLog::load(cfg.space.clone(), cfg.paths.features(), cfg.paths.measurements())
        .context("loading the measurement corpus")?;
    Ok(log)
}

fn load_models(cfg: &RunConfig) -> Result<(Agent, PredictorSet)> {
    let agent = Agent::load(cfg.paths.agent()).context("loading the agent checkpoint")?;
    let predictors = PredictorSet::load(cfg.paths.predictors()).context("loading the predictors")?;
    if agent.metric != predictors.metric {
        return Err(Error::Config(format!(
            "checkpoint optimises {} but predictors estimate {}",
            agent.metric, predictors.metric
        ))
        .into());
    }
    if agent.space != cfg.space {
        return Err(Error::Config("checkpoint was trained on a different configuration space".into()).into());
    }
    Ok((agent, predictors))
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let (_, log) = generate_synthetic_corpus_with(cfg.segments, cfg.seed, &cfg.space, SurrogateParams::default())?;
    let features = log.features_csv()?;
    let measurements = log.measurements_csv()?;
    prepare_out(cfg)?;
    write_atomic(cfg.paths.features(), &features)?;
    write_atomic(cfg.paths.measurements(), &measurements)?;
    snapshot(cfg, "synth")?;
    println!(
        "wrote {} segments, {} measurements to {}",
        log.segments().len(),
        log.len(),
        cfg.paths.out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BitrateUnit {
    Bps,
    Kbps,
    Mbps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TimeUnit {
    S,
    Ms,
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Read external CSVs, convert to kbps and seconds, check the grid is
/// complete, and write the canonical pair.
pub fn ingest(cfg: &RunConfig, features: &Path, measurements: &Path, rate: BitrateUnit, time: TimeUnit) -> Result<()> {
    if same_file(features, cfg.paths.features()) || same_file(measurements, cfg.paths.measurements()) {
        return Err(Error::Config("ingest would overwrite its own input".into()).into());
    }
    let f: Vec<FeatureRow> = read_csv(features)?;
    let mut rows: Vec<MeasurementRow> = read_csv(measurements)?;
    let rate_scale = match rate {
        BitrateUnit::Bps => 1e-3,
        BitrateUnit::Kbps => 1.0,
        BitrateUnit::Mbps => 1e3,
    };
    let time_scale = match time {
        TimeUnit::S => 1.0,
        TimeUnit::Ms => 1e-3,
    };
    for r in &mut rows {
        r.bitrate_kbps *= rate_scale;
        r.dec_time_s *= time_scale;
        r.enc_time_s *= time_scale;
    }
    let log = MeasurementLog::from_rows(cfg.space.clone(), f, rows)?;
    let (fb, mb) = (log.features_csv()?, log.measurements_csv()?);
    prepare_out(cfg)?;
    write_atomic(cfg.paths.features(), &fb)?;
    write_atomic(cfg.paths.measurements(), &mb)?;
    snapshot(cfg, "ingest")?;
    println!("ingested {} segments, {} measurements", log.segments().len(), log.len());
    Ok(())
}

#[derive(Serialize)]
struct TimingRow<'a> {
    target: &'a str,
    inference_time_s: f64,
}

#[derive(Serialize)]
struct SplitRow<'a> {
    segment_id: &'a str,
    set: &'a str,
}

#[derive(Serialize)]
struct CvOut {
    target: String,
    n_trees: usize,
    max_depth: usize,
    mean_rmse: f64,
    fold_rmse: String,
}

pub fn train_predictors_cmd(cfg: &RunConfig, sweep: bool) -> Result<()> {
    let log = load_log(cfg)?;
    let res = train_predictors(&log, cfg.metric, &cfg.predictors, cfg.seed, sweep)?;
    prepare_out(cfg)?;
    res.predictors.save(cfg.paths.predictors())?;
    let out = &cfg.paths.out;
    write_csv(&out.join("predictor_metrics.csv"), &res.metrics)?;
    write_meta(
        out,
        "predictor_metrics",
        &[
            (
                "split",
                "segment-level hold-out; rows of one segment never straddle train and test",
            ),
            (
                "r2",
                "1 - SS_res / SS_tot on held-out rows; empty when the held-out target is constant",
            ),
            (
                "mae_pct",
                "mean(|y_hat - y| / |y|) * 100 over held-out rows with y != 0",
            ),
            ("sdae", "population standard deviation of |y_hat - y|"),
        ],
    )?;
    write_csv(
        &out.join("predictor_timing.csv"),
        res.metrics.iter().map(|m| TimingRow {
            target: &m.target,
            inference_time_s: m.inference_time_s,
        }),
    )?;
    let split = res
        .train_ids
        .iter()
        .map(|s| (s, "train"))
        .chain(res.test_ids.iter().map(|s| (s, "test")))
        .map(|(s, set)| SplitRow { segment_id: s, set });
    write_csv(&out.join("predictor_split.csv"), split)?;
    if sweep {
        let rows: Vec<CvOut> = res
            .sweeps
            .iter()
            .flat_map(|(t, g)| {
                g.table.iter().map(move |r| CvOut {
                    target: t.to_string(),
                    n_trees: r.n_trees,
                    max_depth: r.max_depth,
                    mean_rmse: r.mean_rmse,
                    fold_rmse: r.fold_rmse.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
                })
            })
            .collect();
        write_csv(&out.join("predictor_cv.csv"), rows)?;
    }
    snapshot(cfg, "train-predictors")?;
    for m in &res.metrics {
        println!(
            "{:<16} r2 {:>8} rmse {:.4} mae% {:.2} ({} trees, depth {})",
            m.target,
            m.r2.map_or("n/a".into(), |v| format!("{v:.4}")),
            m.rmse,
            m.mae_pct,
            m.n_trees,
            m.max_depth
        );
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn train_agent_cmd(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let out = train_agent(&log, cfg.metric, cfg.weights, cfg.penalty, &cfg.dqn, cfg.seed)?;
    prepare_out(cfg)?;
    out.agent.save(cfg.paths.agent())?;
    write_atomic(
        &cfg.paths.out.join("trace.csv"),
        &csv_bytes_with_header(&TRACE_HEADER, &out.trace)?,
    )?;
    snapshot(cfg, "train-agent")?;
    println!(
        "{} episodes, {} transitions, {} updates; checkpoint sha256 {}",
        out.trace.len(),
        out.transitions,
        out.updates,
        sha256_file(cfg.paths.agent())?
    );
    Ok(())
}

pub fn build(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let (agent, predictors) = load_models(cfg)?;
    let ids: Vec<String> = log.segments().iter().map(|s| s.segment_id.clone()).collect();
    let built = build_ladders(&agent, &predictors, &log, &ids)?;
    prepare_out(cfg)?;
    let dir = cfg.paths.ladders();
    ensure_dir(dir)?;
    let method = Method::Agent {
        weights: agent.weights,
        penalty: agent.penalty,
    };
    for l in &built.ladders {
        let doc = LadderDocument::new(l.clone(), agent.metric, method);
        write_json(&dir.join(format!("{}.json", l.segment_id)), &doc)?;
    }
    write_csv(&cfg.paths.out.join("build_timing.csv"), &built.timing)?;
    snapshot(cfg, "build")?;
    let n = built.timing.len().max(1) as f64;
    let mean = |f: fn(&ladderq_core::experiment::BuildTiming) -> f64| built.timing.iter().map(f).sum::<f64>() / n;
    println!(
        "{} ladders; mean per segment: features {:.3} ms, prediction {:.3} ms, decisions {:.3} ms ({:.4} ms per rung)",
        built.ladders.len(),
        mean(|t| t.feature_load_ms),
        mean(|t| t.prediction_ms),
        mean(|t| t.decision_ms),
        mean(|t| t.decision_ms_per_rung)
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.3}"))
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let (agent, predictors) = load_models(cfg)?;
    let (_, eval) = evaluate_pipeline(&log, &agent, &predictors, &cfg.baselines)?;
    prepare_out(cfg)?;
    let out = &cfg.paths.out;
    write_atomic(&out.join("evaluation.csv"), &eval.summary_csv()?)?;
    for (label, report) in &eval.reports {
        write_atomic(&out.join(format!("evaluation_{label}.csv")), &report.to_csv()?)?;
    }
    snapshot(cfg, "evaluate")?;
    println!(
        "method          bd-rate%  bd-{:<6} bd-dec(s) switch  quality  dec(s)",
        eval.metric
    );
    for m in &eval.summary {
        println!(
            "{:<15} {:>8} {:>10} {:>9} {:>6.1} {:>8.3} {:>7.3}",
            m.method,
            fmt_opt(m.bd_rate_pct),
            fmt_opt(m.bd_metric),
            fmt_opt(m.bd_detime_s),
            m.switch_score,
            m.mean_quality,
            m.mean_dec_time_s
        );
    }
    Ok(())
}

pub fn robustness_cmd(cfg: &RunConfig) -> Result<()> {
    let log = load_log(cfg)?;
    let (agent, predictors) = load_models(cfg)?;
    let rob = robustness(&log, &agent, &predictors, &cfg.baselines, &cfg.noise, &cfg.seeds)?;
    prepare_out(cfg)?;
    write_csv(&cfg.paths.out.join("robustness.csv"), &rob.rows)?;
    write_csv(&cfg.paths.out.join("robustness_summary.csv"), &rob.aggregate)?;
    write_meta(
        &cfg.paths.out,
        "robustness",
        &[
            ("noise", "zero-mean Gaussian added to predicted quality and decoding time; sigma = noise_pct * |value|; bitrate untouched"),
            ("sampling", "fresh draw per query: every rung re-draws the noise of every action"),
            ("seeding", "one stream per (seed, method, segment); all levels scale the same draws"),
            ("delta", "BD value at the level minus BD value at level 0 for the same seed"),
            ("reference", "noiseless HLS template filled from measurements"),
        ],
    )?;
    snapshot(cfg, "robustness")?;
    for a in &rob.aggregate {
        println!(
            "{:<6} noise {:<4} bd-rate {:>8} ± {:<7} change {:>8}",
            a.method,
            a.noise_pct,
            fmt_opt(a.bd_rate_mean),
            fmt_opt(a.bd_rate_std),
            fmt_opt(a.delta_bd_rate_mean)
        );
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct CurvePoint {
    rate_kbps: f64,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BdAxis {
    Quality,
    Time,
}

fn read_curve(path: &Path, axis: BdAxis) -> Result<RdCurve> {
    let pts: Vec<CurvePoint> = read_csv(path)?;
    let pts: Vec<(f64, f64)> = pts.iter().map(|p| (p.rate_kbps, p.value)).collect();
    let curve = match axis {
        BdAxis::Quality => RdCurve::from_unsorted(&pts, |v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        BdAxis::Time => RdCurve::from_unsorted(&pts, |v| v.iter().sum::<f64>() / v.len() as f64),
    };
    curve.with_context(|| format!("curve {}", path.display()))
}

/// Print BD values of `test` against `reference` as a CSV record.
pub fn bd(reference: &Path, test: &Path, axis: BdAxis) -> Result<()> {
    let a = read_curve(reference, axis)?;
    let b = read_curve(test, axis)?;
    match axis {
        BdAxis::Quality => {
            println!("bd_rate_pct,bd_metric");
            println!("{},{}", bd_rate(&a, &b)?, bd_metric(&a, &b)?);
        }
        BdAxis::Time => {
            println!("bd_time");
            println!("{}", bd_time(&a, &b)?);
        }
    }
    Ok(())
}
