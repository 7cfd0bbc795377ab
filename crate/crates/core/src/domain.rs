//! Core value types shared by every stage of the pipeline.
//!
//! Units are canonical everywhere: bitrates in kbps, times in seconds,
//! resolutions as vertical pixel counts (16:9 frames).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result};

/// Per-segment content complexity: luma texture energy, temporal activity
/// and luma brightness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeatures {
    pub segment_id: String,
    pub e_y: f64,
    pub h: f64,
    pub l_y: f64,
}

impl SegmentFeatures {
    pub fn new(segment_id: impl Into<String>, e_y: f64, h: f64, l_y: f64) -> Result<Self> {
        let f = Self {
            segment_id: segment_id.into(),
            e_y,
            h,
            l_y,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e_y", self.e_y), ("h", self.h), ("l_y", self.l_y)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Data(format!(
                    "segment `{}`: feature {name} = {v} must be finite and >= 0",
                    self.segment_id
                )));
            }
        }
        Ok(())
    }
}

/// Which objective quality metric drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum QualityMetric {
    #[default]
    Xpsnr,
    Vmaf,
}

impl QualityMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityMetric::Xpsnr => "xpsnr",
            QualityMetric::Vmaf => "vmaf",
        }
    }

    /// Clamp a value into the metric's physical range.
    pub fn clamp(self, q: f64) -> f64 {
        match self {
            QualityMetric::Xpsnr => q,
            QualityMetric::Vmaf => q.clamp(0.0, 100.0),
        }
    }
}

impl fmt::Display for QualityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QualityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xpsnr" => Ok(QualityMetric::Xpsnr),
            "vmaf" => Ok(QualityMetric::Vmaf),
            other => Err(Error::Config(format!("unknown quality metric `{other}`"))),
        }
    }
}

/// Resolutions, QPs and target bitrates the ladder is built over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfigSpace")]
pub struct ConfigSpace {
    resolutions: Vec<u32>,
    qps: Vec<u32>,
    target_bitrates: Vec<f64>,
}

#[derive(Deserialize)]
struct RawConfigSpace {
    resolutions: Vec<u32>,
    qps: Vec<u32>,
    target_bitrates: Vec<f64>,
}

impl TryFrom<RawConfigSpace> for ConfigSpace {
    type Error = Error;

    fn try_from(raw: RawConfigSpace) -> Result<Self> {
        ConfigSpace::new(raw.resolutions, raw.qps, raw.target_bitrates)
    }
}

pub const DEFAULT_RESOLUTIONS: [u32; 6] = [360, 540, 720, 1080, 1440, 2160];
pub const DEFAULT_TARGET_BITRATES: [f64; 12] = [
    145.0, 300.0, 600.0, 900.0, 1600.0, 2400.0, 3400.0, 4500.0, 5800.0, 8100.0, 11600.0, 16800.0,
];

impl Default for ConfigSpace {
    fn default() -> Self {
        Self {
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
            qps: (10..=50).collect(),
            target_bitrates: DEFAULT_TARGET_BITRATES.to_vec(),
        }
    }
}

fn strictly_increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl ConfigSpace {
    pub fn new(resolutions: Vec<u32>, qps: Vec<u32>, target_bitrates: Vec<f64>) -> Result<Self> {
        if resolutions.is_empty() || qps.is_empty() || target_bitrates.is_empty() {
            return Err(Error::Config("configuration space lists must be non-empty".into()));
        }
        if !strictly_increasing(&resolutions) {
            return Err(Error::Config("resolutions must be strictly increasing".into()));
        }
        if !strictly_increasing(&qps) {
            return Err(Error::Config("qps must be strictly increasing".into()));
        }
        if target_bitrates.iter().any(|t| !t.is_finite() || *t <= 0.0) || !strictly_increasing(&target_bitrates) {
            return Err(Error::Config(
                "target bitrates must be positive and strictly increasing".into(),
            ));
        }
        if resolutions.contains(&0) {
            return Err(Error::Config("resolution 0 is not valid".into()));
        }
        Ok(Self {
            resolutions,
            qps,
            target_bitrates,
        })
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    pub fn qps(&self) -> &[u32] {
        &self.qps
    }

    pub fn target_bitrates(&self) -> &[f64] {
        &self.target_bitrates
    }

    /// Number of discrete (resolution, QP) actions.
    pub fn n_actions(&self) -> usize {
        self.resolutions.len() * self.qps.len()
    }

    /// Actions are indexed resolution-major: `res_idx * |qps| + qp_idx`.
    pub fn action(&self, index: usize) -> Action {
        let nq = self.qps.len();
        Action {
            resolution: self.resolutions[index / nq],
            qp: self.qps[index % nq],
        }
    }

    pub fn action_index(&self, action: Action) -> Option<usize> {
        let r = self.resolutions.binary_search(&action.resolution).ok()?;
        let q = self.qps.binary_search(&action.qp).ok()?;
        Some(r * self.qps.len() + q)
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        (0..self.n_actions()).map(|i| self.action(i))
    }

    pub fn contains(&self, action: Action) -> bool {
        self.action_index(action).is_some()
    }

    /// Spread between the largest and smallest resolution, in lines.
    pub fn resolution_range(&self) -> f64 {
        f64::from(self.resolutions[self.resolutions.len() - 1] - self.resolutions[0])
    }
}

/// Luma samples per frame for a 16:9 frame of the given height.
pub fn pixel_count(resolution: u32) -> f64 {
    let height = u64::from(resolution);
    let width = (height * 16 + 4) / 9;
    (width * height) as f64
}

/// One encoding configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub resolution: u32,
    pub qp: u32,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}p@qp{}", self.resolution, self.qp)
    }
}

/// Measured or predicted result of encoding one segment with one action.
///
/// `quality` holds whichever metric is active for the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingOutcome {
    pub bitrate_kbps: f64,
    pub quality: f64,
    pub dec_time_s: f64,
    #[serde(default)]
    pub enc_time_s: f64,
}

/// MDP state before normalisation: current target plus the previous rung's
/// outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub tb: f64,
    pub prev_bitrate: f64,
    pub prev_quality: f64,
    pub prev_dec_time: f64,
}

impl AgentState {
    pub fn to_array(self) -> [f64; 4] {
        [self.tb, self.prev_bitrate, self.prev_quality, self.prev_dec_time]
    }
}

/// Reward weights for quality, decoding time and resolution switches. They
/// are independent; no sum-to-one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl RewardWeights {
    pub const fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.lambda1, self.lambda2, self.lambda3] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("reward weight {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::new(0.8, 0.6, 0.1)
    }
}

impl fmt::Display for RewardWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.lambda1, self.lambda2, self.lambda3)
    }
}

impl std::str::FromStr for RewardWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("weights `{s}`: {e}")))?;
        let [l1, l2, l3] = parts[..] else {
            return Err(Error::Config(format!("weights `{s}`: expected three values")));
        };
        let w = RewardWeights::new(l1, l2, l3);
        w.validate()?;
        Ok(w)
    }
}

/// Markers recorded when a constructor had to bend a constraint for a rung.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RungFlags {
    /// No action met the bitrate cap; the cheapest action was taken.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bitrate_infeasible: bool,
    /// Quality monotonicity was dropped for this rung.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub relaxed_monotonicity: bool,
    /// The decoding-time threshold was dropped for this rung.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub relaxed_dec_time: bool,
}

impl RungFlags {
    pub fn any(&self) -> bool {
        self.bitrate_infeasible || self.relaxed_monotonicity || self.relaxed_dec_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub tb: f64,
    pub resolution: u32,
    pub qp: u32,
    pub predicted: EncodingOutcome,
    #[serde(default)]
    pub flags: RungFlags,
}

impl LadderRung {
    pub fn action(&self) -> Action {
        Action {
            resolution: self.resolution,
            qp: self.qp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub segment_id: String,
    pub rungs: Vec<LadderRung>,
}

impl Ladder {
    pub fn resolutions(&self) -> Vec<u32> {
        self.rungs.iter().map(|r| r.resolution).collect()
    }

    pub fn flagged_rungs(&self) -> usize {
        self.rungs.iter().filter(|r| r.flags.any()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Ladder length differs from the number of target bitrates.
    RungCount { expected: usize, found: usize },
    /// Rung target is not the configured target at that position.
    TargetMismatch { expected: f64, found: f64 },
    /// Action lies outside the configured resolution/QP sets.
    UnknownAction,
    /// Bitrate above the rung's target.
    BitrateExceedsTarget { bitrate: f64, tb: f64 },
    /// Quality below the previous rung's.
    QualityDecrease { quality: f64, previous: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub rung: usize,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

/// Check a ladder against the bitrate cap, quality monotonicity and the
/// one-rung-per-target layout. Violations are reported, never raised.
pub fn validate_ladder(ladder: &Ladder, space: &ConfigSpace) -> Vec<Violation> {
    let mut out = Vec::new();
    let targets = space.target_bitrates();
    if ladder.rungs.len() != targets.len() {
        out.push(Violation {
            rung: ladder.rungs.len(),
            kind: ViolationKind::RungCount {
                expected: targets.len(),
                found: ladder.rungs.len(),
            },
        });
    }
    for (i, rung) in ladder.rungs.iter().enumerate() {
        if let Some(&expected) = targets.get(i) {
            if rung.tb != expected {
                out.push(Violation {
                    rung: i,
                    kind: ViolationKind::TargetMismatch {
                        expected,
                        found: rung.tb,
                    },
                });
            }
        }
        if !space.contains(rung.action()) {
            out.push(Violation {
                rung: i,
                kind: ViolationKind::UnknownAction,
            });
        }
        if rung.predicted.bitrate_kbps > rung.tb {
            out.push(Violation {
                rung: i,
                kind: ViolationKind::BitrateExceedsTarget {
                    bitrate: rung.predicted.bitrate_kbps,
                    tb: rung.tb,
                },
            });
        }
        if i > 0 {
            let prev = &ladder.rungs[i - 1];
            if rung.tb > prev.tb && rung.predicted.quality < prev.predicted.quality {
                out.push(Violation {
                    rung: i,
                    kind: ViolationKind::QualityDecrease {
                        quality: rung.predicted.quality,
                        previous: prev.predicted.quality,
                    },
                });
            }
        }
    }
    out
}

/// Mean absolute difference of consecutive resolutions.
pub fn switch_score(resolutions: &[u32]) -> Result<f64> {
    if resolutions.len() < 2 {
        return Err(Error::Data("resolution switch score needs at least two rungs".into()));
    }
    let total: u64 = resolutions.windows(2).map(|w| u64::from(w[0].abs_diff(w[1]))).sum();
    Ok(total as f64 / (resolutions.len() - 1) as f64)
}

pub fn resolution_switch_score(ladder: &Ladder) -> Result<f64> {
    switch_score(&ladder.resolutions())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn rung(tb: f64, resolution: u32, qp: u32, bitrate: f64, quality: f64) -> LadderRung {
        LadderRung {
            tb,
            resolution,
            qp,
            predicted: EncodingOutcome {
                bitrate_kbps: bitrate,
                quality,
                dec_time_s: 1.0,
                enc_time_s: 0.0,
            },
            flags: RungFlags::default(),
        }
    }

    #[test]
    fn default_space_matches_encoding_grid() {
        let s = ConfigSpace::default();
        assert_eq!(s.resolutions(), &[360, 540, 720, 1080, 1440, 2160]);
        assert_eq!(s.qps().len(), 41);
        assert_eq!(s.qps()[0], 10);
        assert_eq!(s.qps()[40], 50);
        assert_eq!(s.target_bitrates().len(), 12);
        assert_eq!(s.target_bitrates()[0], 145.0);
        assert_eq!(s.target_bitrates()[11], 16800.0);
        assert_eq!(s.n_actions(), 246);
    }

    #[test]
    fn action_index_roundtrip() {
        let s = ConfigSpace::default();
        for i in 0..s.n_actions() {
            assert_eq!(s.action_index(s.action(i)), Some(i));
        }
        assert_eq!(
            s.action_index(Action {
                resolution: 480,
                qp: 30
            }),
            None
        );
        assert_eq!(
            s.action(0),
            Action {
                resolution: 360,
                qp: 10
            }
        );
        assert_eq!(
            s.action(245),
            Action {
                resolution: 2160,
                qp: 50
            }
        );
    }

    #[test]
    fn space_rejects_unordered_lists() {
        assert!(ConfigSpace::new(vec![720, 360], vec![10], vec![100.0]).is_err());
        assert!(ConfigSpace::new(vec![360], vec![10, 10], vec![100.0]).is_err());
        assert!(ConfigSpace::new(vec![360], vec![10], vec![200.0, 100.0]).is_err());
        assert!(ConfigSpace::new(vec![], vec![10], vec![100.0]).is_err());
    }

    #[test]
    fn pixel_counts_are_16_by_9() {
        assert_eq!(pixel_count(360), 640.0 * 360.0);
        assert_eq!(pixel_count(1080), 1920.0 * 1080.0);
        assert_eq!(pixel_count(2160), 3840.0 * 2160.0);
        assert_eq!(pixel_count(540), 960.0 * 540.0);
    }

    #[test]
    fn features_must_be_nonnegative_and_finite() {
        assert!(SegmentFeatures::new("a", 1.0, 2.0, 3.0).is_ok());
        assert!(SegmentFeatures::new("a", -1.0, 2.0, 3.0).is_err());
        assert!(SegmentFeatures::new("a", 1.0, f64::NAN, 3.0).is_err());
        assert!(SegmentFeatures::new("a", 1.0, 2.0, f64::INFINITY).is_err());
    }

    #[test]
    fn weights_parse() {
        let w: RewardWeights = "0.8, 0.6,0.1".parse().unwrap();
        assert_eq!(w, RewardWeights::new(0.8, 0.6, 0.1));
        assert!("1,2".parse::<RewardWeights>().is_err());
        assert!("1,-2,0".parse::<RewardWeights>().is_err());
    }

    fn hls_ladder_with_monotone_quality() -> Ladder {
        let res = [360, 360, 540, 540, 540, 720, 720, 1080, 1080, 1440, 2160, 2160];
        let rungs = DEFAULT_TARGET_BITRATES
            .iter()
            .zip(res)
            .enumerate()
            .map(|(i, (&tb, r))| rung(tb, r, 30, tb * 0.9, 30.0 + i as f64))
            .collect();
        Ladder {
            segment_id: "s".into(),
            rungs,
        }
    }

    #[test]
    fn hls_ladder_is_valid() {
        let l = hls_ladder_with_monotone_quality();
        assert!(validate_ladder(&l, &ConfigSpace::default()).is_empty());
    }

    #[test]
    fn bitrate_equal_to_target_is_admitted() {
        let space = ConfigSpace::new(vec![360], vec![30], vec![500.0]).unwrap();
        let l = Ladder {
            segment_id: "s".into(),
            rungs: vec![rung(500.0, 360, 30, 500.0, 30.0)],
        };
        assert!(validate_ladder(&l, &space).is_empty());
    }

    #[test]
    fn quality_dip_is_one_violation_at_rung_two() {
        let space = ConfigSpace::new(vec![360], vec![30], vec![100.0, 200.0, 300.0]).unwrap();
        let l = Ladder {
            segment_id: "s".into(),
            rungs: vec![
                rung(100.0, 360, 30, 90.0, 30.0),
                rung(200.0, 360, 30, 190.0, 29.0),
                rung(300.0, 360, 30, 290.0, 31.0),
            ],
        };
        let v = validate_ladder(&l, &space);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rung, 1);
        assert!(matches!(v[0].kind, ViolationKind::QualityDecrease { .. }));
    }

    #[test]
    fn structural_violations() {
        let space = ConfigSpace::new(vec![360], vec![30], vec![100.0, 200.0]).unwrap();
        let l = Ladder {
            segment_id: "s".into(),
            rungs: vec![rung(150.0, 480, 30, 160.0, 30.0)],
        };
        let v = validate_ladder(&l, &space);
        let kinds: Vec<_> = v.iter().map(|v| v.kind).collect();
        assert!(kinds.iter().any(|k| matches!(k, ViolationKind::RungCount { .. })));
        assert!(kinds.iter().any(|k| matches!(k, ViolationKind::TargetMismatch { .. })));
        assert!(kinds.iter().any(|k| matches!(k, ViolationKind::UnknownAction)));
        assert!(kinds
            .iter()
            .any(|k| matches!(k, ViolationKind::BitrateExceedsTarget { .. })));
    }

    #[test]
    fn switch_scores() {
        assert_eq!(switch_score(&[360, 360, 360]).unwrap(), 0.0);
        assert_eq!(switch_score(&[360, 360, 540]).unwrap(), 90.0);
        assert_eq!(switch_score(&[360, 2160]).unwrap(), 1800.0);
        assert!(switch_score(&[360]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn switch_score_times_pairs_is_total_variation(res in proptest::collection::vec(
            proptest::sample::select(DEFAULT_RESOLUTIONS.to_vec()), 2..20)) {
            let s = switch_score(&res).unwrap();
            let tv: f64 = res.windows(2).map(|w| (f64::from(w[0]) - f64::from(w[1])).abs()).sum();
            proptest::prop_assert!((s * (res.len() - 1) as f64 - tv).abs() < 1e-9);
        }
    }
}
