use anyhow::Context;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use ladderq_core::experiment::{BaselineParams, PredictorConfig};
use ladderq_core::ladder::PenaltyPolicy;
use ladderq_core::qnet::DqnConfig;
use ladderq_core::{ConfigSpace, Error, QualityMetric, RewardWeights};

/// File locations. Unset entries resolve to fixed names under `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    pub features: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub predictors: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub ladders: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            features: None,
            measurements: None,
            predictors: None,
            agent: None,
            ladders: None,
        }
    }
}

impl Paths {
    fn fill(&mut self) {
        let out = self.out.clone();
        let or = |p: &mut Option<PathBuf>, name: &str| {
            p.get_or_insert_with(|| out.join(name));
        };
        or(&mut self.features, "features.csv");
        or(&mut self.measurements, "measurements.csv");
        or(&mut self.predictors, "predictors.json");
        or(&mut self.agent, "agent.json");
        or(&mut self.ladders, "ladders");
    }

    pub fn features(&self) -> &Path {
        self.features.as_deref().expect("paths resolved")
    }

    pub fn measurements(&self) -> &Path {
        self.measurements.as_deref().expect("paths resolved")
    }

    pub fn predictors(&self) -> &Path {
        self.predictors.as_deref().expect("paths resolved")
    }

    pub fn agent(&self) -> &Path {
        self.agent.as_deref().expect("paths resolved")
    }

    pub fn ladders(&self) -> &Path {
        self.ladders.as_deref().expect("paths resolved")
    }
}

/// Everything a command needs. The resolved form is written next to the
/// outputs of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub metric: QualityMetric,
    pub penalty: PenaltyPolicy,
    /// Segments drawn by `synth`.
    pub segments: usize,
    /// Noise levels of the robustness sweep, as fractions.
    pub noise: Vec<f64>,
    /// Noise seeds of the robustness sweep.
    pub seeds: Vec<u64>,
    pub weights: RewardWeights,
    pub paths: Paths,
    pub space: ConfigSpace,
    pub dqn: DqnConfig,
    pub predictors: PredictorConfig,
    pub baselines: BaselineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            metric: QualityMetric::Xpsnr,
            penalty: PenaltyPolicy::Fixed,
            segments: 20,
            noise: vec![0.1, 0.2],
            seeds: vec![1, 2, 3],
            weights: RewardWeights::default(),
            paths: Paths::default(),
            space: ConfigSpace::default(),
            dqn: DqnConfig::default(),
            predictors: PredictorConfig::default(),
            baselines: BaselineParams::default(),
        }
    }
}

/// Values given on the command line; each one replaces its config entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub metric: Option<QualityMetric>,
    pub weights: Option<RewardWeights>,
    pub penalty: Option<PenaltyPolicy>,
    pub noise: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text).with_context(|| format!("loading {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Invariant(format!("config snapshot: {e}")))
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.metric {
            self.metric = m;
        }
        if let Some(w) = o.weights {
            self.weights = w;
        }
        if let Some(p) = o.penalty {
            self.penalty = p;
        }
        if let Some(n) = &o.noise {
            self.noise = n.clone();
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        self.paths.fill();
    }

    fn validate(&self) -> Result<(), Error> {
        self.weights.validate()?;
        self.dqn.validate()?;
        self.predictors.forest.validate()?;
        if self.noise.iter().any(|n| !(0.0..=0.5).contains(n)) {
            return Err(Error::Config("noise levels must lie in [0, 0.5]".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.predictors.train_frac > 0.0 && self.predictors.train_frac < 1.0) {
            return Err(Error::Config("predictors.train_frac must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides::default());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_win_and_paths_follow_out() {
        let cfg_text = "seed = 4\n[paths]\nout = \"a\"\n";
        let mut cfg = RunConfig::from_toml(cfg_text).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            out: Some("b".into()),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.paths.agent(), Path::new("b/agent.json"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        assert!(RunConfig::from_toml("[dqn]\nepisode = 3").is_err());
    }
}
