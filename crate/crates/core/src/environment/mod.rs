//! The encoding environment: given a segment and an action, report what
//! encoding would produce.
//!
//! Two backends implement [`Environment`]: [`MeasurementLog`] replays
//! pre-measured grids, [`Surrogate`] evaluates a parametric
//! rate/quality/decoding-time model.

mod corpus;
mod log;
mod noise;
mod surrogate;

pub use corpus::{generate_synthetic_corpus, generate_synthetic_corpus_with};
pub use log::{FeatureRow, MeasurementLog, MeasurementRow};
pub use noise::{perturb_predictions, Perturber};
pub use surrogate::{Surrogate, SurrogateParams};

use serde::{Deserialize, Serialize};

use crate::domain::{Action, ConfigSpace, EncodingOutcome, QualityMetric, SegmentFeatures};
use crate::Result;

/// Everything measured for one (segment, resolution, QP) point: both
/// quality metrics are carried, the run selects one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredPoint {
    pub bitrate_kbps: f64,
    pub xpsnr_db: f64,
    pub vmaf: f64,
    pub dec_time_s: f64,
    pub enc_time_s: f64,
}

impl MeasuredPoint {
    pub fn quality(&self, metric: QualityMetric) -> f64 {
        match metric {
            QualityMetric::Xpsnr => self.xpsnr_db,
            QualityMetric::Vmaf => self.vmaf,
        }
    }

    pub fn outcome(&self, metric: QualityMetric) -> EncodingOutcome {
        EncodingOutcome {
            bitrate_kbps: self.bitrate_kbps,
            quality: self.quality(metric),
            dec_time_s: self.dec_time_s,
            enc_time_s: self.enc_time_s,
        }
    }
}

pub trait Environment: Sync {
    fn measure_point(&self, segment: &SegmentFeatures, action: Action) -> Result<MeasuredPoint>;

    fn measure(&self, segment: &SegmentFeatures, action: Action, metric: QualityMetric) -> Result<EncodingOutcome> {
        Ok(self.measure_point(segment, action)?.outcome(metric))
    }
}

/// All outcomes for one segment, indexed by action index.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeGrid {
    pub segment_id: String,
    pub outcomes: Vec<EncodingOutcome>,
}

impl OutcomeGrid {
    pub fn measure(
        env: &dyn Environment,
        segment: &SegmentFeatures,
        space: &ConfigSpace,
        metric: QualityMetric,
    ) -> Result<Self> {
        let outcomes = space
            .actions()
            .map(|a| env.measure(segment, a, metric))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            segment_id: segment.segment_id.clone(),
            outcomes,
        })
    }

    pub fn get(&self, action_index: usize) -> &EncodingOutcome {
        &self.outcomes[action_index]
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}
