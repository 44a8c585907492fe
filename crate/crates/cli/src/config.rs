use std::path::{Path, PathBuf};

use glmb::engine::{ModelParams, Models, TrackerConfig};
use glmb::metrics::{MetricConfig, WindowSpec};
use glmb::sim::ScenarioConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs, loaded from one TOML file. Missing sections take
/// their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides the scenario and tracker seeds when set.
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
    pub models: ModelParams,
    pub tracker: TrackerConfig,
    pub metric: MetricConfig,
    pub window: WindowSpec,
    pub paths: Paths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub out_dir: PathBuf,
    /// Scans read by `track`; defaults to `scans.jsonl` in the output
    /// directory.
    pub scans: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            scans: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            scenario: ScenarioConfig::default(),
            models: ModelParams::default(),
            tracker: TrackerConfig::default(),
            metric: MetricConfig::default(),
            window: WindowSpec::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
        };
        Ok(cfg)
    }

    /// Applies the seed override and checks every section.
    pub fn finish(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.scenario.rng_seed = s;
            self.tracker.rng_seed = s;
        }
        let usage = |e: glmb::Error| CliError::Usage(format!("invalid config: {e}"));
        self.scenario.validate().map_err(usage)?;
        self.models.build().map_err(usage)?;
        self.tracker.validate().map_err(usage)?;
        self.metric.validate().map_err(usage)?;
        self.window.validate().map_err(usage)?;
        Ok(self)
    }

    pub fn models(&self) -> Models {
        self.models.build().expect("validated in finish")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = toml::from_str::<RunConfig>("[scenario]\nduration = 5\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn seed_flows_to_all_components() {
        let cfg = RunConfig::default().finish(Some(42)).unwrap();
        assert_eq!((cfg.scenario.rng_seed, cfg.tracker.rng_seed), (42, 42));
        let bad: RunConfig = toml::from_str("[metric]\ncutoff = -1.0\n").unwrap();
        assert!(matches!(bad.finish(None), Err(CliError::Usage(_))));
    }
}
