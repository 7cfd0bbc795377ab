//! Tree-ensemble predictors for decoding time, quality and bitrate.

mod forest;
mod metrics;
mod search;
mod tree;

pub use forest::{ForestParams, TreeEnsemble};
pub use metrics::{evaluate, score, PredictorMetrics};
pub use search::{grid_search, kfold_segments, split_segments, CvRow, GridSearchResult};
pub use tree::{Node, RegressionTree};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::domain::{Action, EncodingOutcome, QualityMetric, SegmentFeatures};
use crate::environment::MeasurementLog;
use crate::rng::derive_seed;
use crate::{io, Error, Result};

pub const N_FEATURES: usize = 5;

/// `(e_y, h, l_y, resolution, qp)` with resolution as vertical pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn new(seg: &SegmentFeatures, action: Action) -> Self {
        Self([
            seg.e_y,
            seg.h,
            seg.l_y,
            f64::from(action.resolution),
            f64::from(action.qp),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    DecTime,
    Quality(QualityMetric),
    Bitrate,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::DecTime => f.write_str("dec_time"),
            Target::Quality(m) => write!(f, "quality_{m}"),
            Target::Bitrate => f.write_str("bitrate"),
        }
    }
}

/// Rows of a regression problem, each tagged with its segment.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub segment_ids: Vec<String>,
    pub xs: Vec<FeatureVector>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn from_log(log: &MeasurementLog, target: Target) -> Self {
        let mut d = Dataset::default();
        for (seg, action, point) in log.points() {
            d.segment_ids.push(seg.segment_id.clone());
            d.xs.push(FeatureVector::new(seg, action));
            d.ys.push(match target {
                Target::DecTime => point.dec_time_s,
                Target::Quality(m) => point.quality(m),
                Target::Bitrate => point.bitrate_kbps,
            });
        }
        d
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Rows whose segment is in `ids`.
    pub fn select(&self, ids: &[String]) -> Self {
        let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        let mut d = Dataset::default();
        for i in 0..self.len() {
            if keep.contains(self.segment_ids[i].as_str()) {
                d.segment_ids.push(self.segment_ids[i].clone());
                d.xs.push(self.xs[i]);
                d.ys.push(self.ys[i]);
            }
        }
        d
    }

    /// Distinct segment ids in first-seen order.
    pub fn segments(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.segment_ids
            .iter()
            .filter(|s| seen.insert(s.as_str()))
            .cloned()
            .collect()
    }

    pub fn fit(&self, params: ForestParams, seed: u64) -> Result<TreeEnsemble> {
        TreeEnsemble::fit(&self.xs, &self.ys, params, seed)
    }

    pub fn evaluate(&self, model: &TreeEnsemble) -> Result<PredictorMetrics> {
        evaluate(model, &self.xs, &self.ys)
    }
}

const FORMAT: &str = "ladderq-predictors";
const VERSION: u32 = 1;

/// The three predictors used at inference time for one quality metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSet {
    format: String,
    version: u32,
    pub metric: QualityMetric,
    pub dec_time: TreeEnsemble,
    pub quality: TreeEnsemble,
    pub bitrate: TreeEnsemble,
}

impl PredictorSet {
    pub fn new(metric: QualityMetric, dec_time: TreeEnsemble, quality: TreeEnsemble, bitrate: TreeEnsemble) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            metric,
            dec_time,
            quality,
            bitrate,
        }
    }

    /// Fit all three targets on the segments of `log`, each from its own
    /// stream of `seed`.
    pub fn fit(log: &MeasurementLog, metric: QualityMetric, params: ForestParams, seed: u64) -> Result<Self> {
        let fit = |target: Target, stream: u64| Dataset::from_log(log, target).fit(params, derive_seed(seed, stream));
        Ok(Self::new(
            metric,
            fit(Target::DecTime, 1)?,
            fit(Target::Quality(metric), 2)?,
            fit(Target::Bitrate, 3)?,
        ))
    }

    pub fn model(&self, target: Target) -> Result<&TreeEnsemble> {
        match target {
            Target::DecTime => Ok(&self.dec_time),
            Target::Bitrate => Ok(&self.bitrate),
            Target::Quality(m) if m == self.metric => Ok(&self.quality),
            Target::Quality(m) => Err(Error::Config(format!(
                "predictors were trained for {}, not {m}",
                self.metric
            ))),
        }
    }

    /// Predicted outcome; encoding time is not modelled and reported as 0.
    pub fn predict(&self, seg: &SegmentFeatures, action: Action) -> EncodingOutcome {
        let x = FeatureVector::new(seg, action);
        EncodingOutcome {
            bitrate_kbps: self.bitrate.predict(&x),
            quality: self.metric.clamp(self.quality.predict(&x)),
            dec_time_s: self.dec_time.predict(&x),
            enc_time_s: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(s)?;
        set.check_header()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        io::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let set: Self = io::read_json(path)?;
        set.check_header()?;
        Ok(set)
    }

    fn check_header(&self) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Data(format!(
                "unsupported predictor file {} v{} (expected {FORMAT} v{VERSION})",
                self.format, self.version
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::generate_synthetic_corpus;

    #[test]
    fn dataset_rows_follow_log() {
        let (_, log) = generate_synthetic_corpus(3, 1).unwrap();
        let d = Dataset::from_log(&log, Target::Bitrate);
        assert_eq!(d.len(), 3 * 246);
        assert_eq!(d.segments().len(), 3);
        let one = d.select(&d.segments()[..1]);
        assert_eq!(one.len(), 246);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let (features, log) = generate_synthetic_corpus(2, 4).unwrap();
        let set = PredictorSet::fit(&log, QualityMetric::Vmaf, ForestParams::with_size(5, 6), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        set.save(&path).unwrap();
        let back = PredictorSet::load(&path).unwrap();
        assert_eq!(back, set);
        for a in log.space().actions() {
            assert_eq!(back.predict(&features[0], a), set.predict(&features[0], a));
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let (_, log) = generate_synthetic_corpus(1, 4).unwrap();
        let set = PredictorSet::fit(&log, QualityMetric::Xpsnr, ForestParams::with_size(1, 2), 1).unwrap();
        let json = set.to_json().unwrap().replace("\"version\":1", "\"version\":9");
        assert!(matches!(PredictorSet::from_json(&json), Err(Error::Data(_))));
    }

    #[test]
    fn metric_mismatch_is_config_error() {
        let (_, log) = generate_synthetic_corpus(1, 4).unwrap();
        let set = PredictorSet::fit(&log, QualityMetric::Xpsnr, ForestParams::with_size(1, 2), 1).unwrap();
        assert!(set.model(Target::Quality(QualityMetric::Vmaf)).is_err());
        assert!(set.model(Target::Quality(QualityMetric::Xpsnr)).is_ok());
    }
}
