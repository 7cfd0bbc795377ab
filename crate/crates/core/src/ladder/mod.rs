//! Reward shaping, agent inference and the baseline ladder constructors.

mod baselines;
mod infer;
mod reward;

pub use baselines::{
    cdbl_ladder, greedy_oracle_ladder, hls_ladder, hls_resolution, rqtpf_ladder, vexus_ladder, HLS_TEMPLATE,
};
pub use infer::{infer_from_outcomes, infer_ladder, predict_grid, Inference};
pub use reward::{min_max, reward, PenaltyPolicy, RewardBounds, RewardBreakdown};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::domain::{Ladder, QualityMetric, RewardWeights};

/// Which constructor produced a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Method {
    Agent {
        weights: RewardWeights,
        penalty: PenaltyPolicy,
    },
    Hls,
    Cdbl {
        tau: f64,
    },
    Rqtpf {
        alpha: f64,
    },
    Vexus,
    GreedyOracle {
        weights: RewardWeights,
        penalty: PenaltyPolicy,
    },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Agent { .. } => f.write_str("agent"),
            Method::Hls => f.write_str("hls"),
            Method::Cdbl { .. } => f.write_str("cdbl"),
            Method::Rqtpf { .. } => f.write_str("rqtpf"),
            Method::Vexus => f.write_str("vexus"),
            Method::GreedyOracle { .. } => f.write_str("greedy-oracle"),
        }
    }
}

/// One ladder as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderDocument {
    pub segment_id: String,
    pub metric: QualityMetric,
    pub method: Method,
    pub rungs: Vec<crate::domain::LadderRung>,
}

impl LadderDocument {
    pub fn new(ladder: Ladder, metric: QualityMetric, method: Method) -> Self {
        Self {
            segment_id: ladder.segment_id,
            metric,
            method,
            rungs: ladder.rungs,
        }
    }

    pub fn ladder(&self) -> Ladder {
        Ladder {
            segment_id: self.segment_id.clone(),
            rungs: self.rungs.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tests::rung;

    #[test]
    fn document_round_trip() {
        let doc = LadderDocument::new(
            Ladder {
                segment_id: "a".into(),
                rungs: vec![rung(145.0, 360, 40, 120.0, 33.5)],
            },
            QualityMetric::Xpsnr,
            Method::Agent {
                weights: RewardWeights::default(),
                penalty: PenaltyPolicy::HistoryAware,
            },
        );
        let s = serde_json::to_string(&doc).unwrap();
        assert!(s.contains("\"name\":\"agent\""));
        assert!(s.contains("history-aware"));
        let back: LadderDocument = serde_json::from_str(&s).unwrap();
        assert_eq!(back, doc);
    }
}
