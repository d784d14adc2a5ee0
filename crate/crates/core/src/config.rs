//! Experiment configuration, read from TOML.
//!
//! ```toml
//! name = "thermal"
//! seed = 1
//! evaluations = 600
//!
//! [supervisor]
//! epsilon = 0.05
//! lambda = 0.03
//!
//! [scenario]
//! kind = "thermal"
//! noise_sd = 0.35
//! baseline_from = 401
//! profiles = [[[], []], [[0.5], []]]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{model_preset_menu, PredictorSpec, TrainingWindow, DEFAULT_RIDGE};
use crate::partition::PartitionProfile;
use crate::plant::{thermal_zone_preset, Interval, TimeGrid};
use crate::scenario::RewardTable;
use crate::supervisor::SupervisorConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Seeds used by sweeps; a single run uses `seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub evaluations: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub supervisor: SupervisorConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioConfig {
    Thermal(ThermalConfig),
    Synthetic(SyntheticConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    #[serde(default = "default_ts")]
    pub sampling_period_hours: f64,
    #[serde(default = "default_n")]
    pub samples_per_evaluation: usize,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default = "default_hold")]
    pub hold_samples: usize,
    /// Most recent regressor/target pairs used per training; 0 means all.
    #[serde(default = "default_window")]
    pub training_window: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// Intervals simulated before the first evaluation; the initial models
    /// are trained on them.
    #[serde(default = "default_warmup")]
    pub warmup_intervals: usize,
    /// Names from the preset menu, in menu order.
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Per profile, per input: interior breakpoints.
    #[serde(default = "default_profiles")]
    pub profiles: Vec<Vec<Vec<f64>>>,
    /// Compute the exhaustive per-subset baseline from this evaluation on.
    #[serde(default)]
    pub baseline_from: Option<usize>,
}

fn default_ts() -> f64 {
    1.0 / 12.0
}
fn default_n() -> usize {
    400
}
fn default_hold() -> usize {
    6
}
fn default_window() -> usize {
    4000
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}
fn default_warmup() -> usize {
    1
}
fn default_models() -> Vec<String> {
    model_preset_menu().into_iter().map(|m| m.name).collect()
}
fn default_profiles() -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![], vec![]], vec![vec![0.5], vec![]]]
}
fn default_delta() -> f64 {
    0.1
}

impl Default for ThermalConfig {
    fn default() -> Self {
        Self {
            sampling_period_hours: default_ts(),
            samples_per_evaluation: default_n(),
            noise_sd: 0.0,
            hold_samples: default_hold(),
            training_window: default_window(),
            ridge: default_ridge(),
            warmup_intervals: default_warmup(),
            models: default_models(),
            profiles: default_profiles(),
            baseline_from: None,
        }
    }
}

impl ThermalConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::aligned(self.sampling_period_hours, self.samples_per_evaluation)
    }

    pub fn window(&self) -> TrainingWindow {
        match self.training_window {
            0 => TrainingWindow::All,
            n => TrainingWindow::Last(n),
        }
    }

    /// The selected preset models, renumbered in order, with the configured ridge.
    pub fn menu(&self) -> Result<Vec<PredictorSpec>> {
        let preset = model_preset_menu();
        if self.models.is_empty() {
            return Err(Error::Config("the model menu is empty".into()));
        }
        self.models
            .iter()
            .enumerate()
            .map(|(id, name)| {
                let spec = preset
                    .iter()
                    .find(|m| &m.name == name)
                    .ok_or_else(|| Error::Config(format!("unknown model preset '{name}'")))?;
                PredictorSpec::new(id, spec.name.clone(), spec.basis.clone(), self.ridge)
                    .map_err(|e| Error::Config(e.to_string()))
            })
            .collect()
    }

    pub fn partition_profiles(&self) -> Result<Vec<PartitionProfile>> {
        let domains: Vec<Interval> = thermal_zone_preset().input_domains().to_vec();
        if self.profiles.is_empty() {
            return Err(Error::Config("the partition menu is empty".into()));
        }
        self.profiles
            .iter()
            .enumerate()
            .map(|(id, b)| {
                PartitionProfile::from_breakpoints(id, domains.clone(), b.clone())
                    .map_err(|e| Error::Config(format!("profile {id}: {e}")))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Mean reward per profile, subset and model.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// Log-scale standard deviation of the unit-mean reward noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Radius of the neighbourhood of the pure best pair.
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl SyntheticConfig {
    pub fn table(&self) -> Result<RewardTable> {
        RewardTable::new(self.rewards.clone()).map_err(|e| Error::Config(e.to_string()))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.supervisor
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.evaluations == 0 {
            return Err(Error::Config("at least one evaluation is required".into()));
        }
        match &self.scenario {
            ScenarioConfig::Thermal(t) => {
                t.grid().map_err(|e| Error::Config(e.to_string()))?;
                t.menu()?;
                t.partition_profiles()?;
                if t.warmup_intervals == 0 {
                    return Err(Error::Config(
                        "thermal runs need at least one warm-up interval".into(),
                    ));
                }
                if t.hold_samples == 0 || !(t.noise_sd >= 0.0) {
                    return Err(Error::Config(
                        "hold_samples must be positive and noise_sd nonnegative".into(),
                    ));
                }
            }
            ScenarioConfig::Synthetic(s) => {
                s.table()?;
                if !(s.noise_sigma >= 0.0) || !(s.delta > 0.0) {
                    return Err(Error::Config(
                        "noise_sigma must be nonnegative and delta positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Short scenario tag.
    pub fn kind(&self) -> &'static str {
        match self.scenario {
            ScenarioConfig::Thermal(_) => "thermal",
            ScenarioConfig::Synthetic(_) => "synthetic",
        }
    }

    /// The thermal-zone preset: 5 min sampling, 400-sample evaluations,
    /// step size 0.05, perturbation 0.03, three models, two partition
    /// profiles (unpartitioned; water flow split at one half).
    pub fn thermal_preset() -> Self {
        Self {
            name: "thermal".into(),
            seed: 1,
            seeds: vec![1, 2, 3],
            evaluations: 600,
            output_dir: None,
            supervisor: SupervisorConfig::new(0.05, 0.03).expect("valid"),
            scenario: ScenarioConfig::Thermal(ThermalConfig {
                noise_sd: 0.35,
                baseline_from: Some(401),
                ..ThermalConfig::default()
            }),
        }
    }

    /// Two profiles (one and four subsets) over three models with noisy
    /// fixed rewards.
    pub fn synthetic_preset() -> Self {
        Self {
            name: "synthetic".into(),
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            evaluations: 20_000,
            output_dir: None,
            supervisor: SupervisorConfig::new(0.01, 0.01).expect("valid"),
            scenario: ScenarioConfig::Synthetic(SyntheticConfig {
                rewards: synthetic_rewards(),
                noise_sigma: 0.3,
                delta: 0.1,
            }),
        }
    }
}

/// Reward table of the synthetic preset.
pub fn synthetic_rewards() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![vec![4.0, 6.0, 3.0]],
        vec![
            vec![8.0, 5.0, 3.0],
            vec![4.0, 7.5, 2.5],
            vec![3.0, 4.5, 8.5],
            vec![7.0, 3.5, 4.0],
        ],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for config in [
            ExperimentConfig::thermal_preset(),
            ExperimentConfig::synthetic_preset(),
        ] {
            config.validate().unwrap();
            let text = config.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), config);
        }
    }

    #[test]
    fn minimal_thermal_file_uses_defaults() {
        let text = r#"
            name = "t"
            evaluations = 10
            [supervisor]
            epsilon = 0.05
            lambda = 0.03
            [scenario]
            kind = "thermal"
        "#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        let ScenarioConfig::Thermal(t) = &c.scenario else {
            panic!("wrong kind")
        };
        assert_eq!(t.samples_per_evaluation, 400);
        assert_eq!(t.menu().unwrap().len(), 3);
        assert_eq!(t.partition_profiles().unwrap()[1].subset_count(), 2);
        assert_eq!(c.supervisor.r_max, 1e6);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let bad = [
            "name = 'x'\nevaluations = 1\n[supervisor]\nepsilon = -1.0\nlambda = 0.1\n[scenario]\nkind = 'thermal'",
            "name = 'x'\nevaluations = 1\n[supervisor]\nepsilon = 0.1\nlambda = 0.1\n[scenario]\nkind = 'plasma'",
            "name = 'x'\nevaluations = 1\n[supervisor]\nepsilon = 0.1\nlambda = 0.1\n[scenario]\nkind = 'thermal'\nmodels = ['cubic']",
            "name = 'x'\nevaluations = 1\n[supervisor]\nepsilon = 0.1\nlambda = 0.1\n[scenario]\nkind = 'thermal'\nprofiles = [[[1.5], []]]",
            "name = 'x'\nevaluations = 1\n[supervisor]\nepsilon = 0.1\nlambda = 0.1\n[scenario]\nkind = 'synthetic'\nrewards = [[[1.0, -1.0]]]",
            "name = 'x'\nevaluations = 0\n[supervisor]\nepsilon = 0.1\nlambda = 0.1\n[scenario]\nkind = 'synthetic'\nrewards = [[[1.0]]]",
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn synthetic_preset_satisfies_the_assumptions() {
        let c = ExperimentConfig::synthetic_preset();
        let ScenarioConfig::Synthetic(s) = &c.scenario else {
            panic!()
        };
        let t = s.table().unwrap();
        assert!(t.check().holds());
        assert_eq!(t.best_profile(), 1);
    }
}
