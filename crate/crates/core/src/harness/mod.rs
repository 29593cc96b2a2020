//! Experiment configuration, the standard map suite, experiment drivers,
//! report emission and the human-oracle session server.

mod experiment;
mod report;
pub mod session;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentConfig;
use crate::control::{
    BaselineKind, BranchSetup, ParamError, PenaltyParams, RunConfig, RunError, SelectorParams,
    TrainError, TrainerConfig,
};
use crate::env::{
    generate_episode, load_map, AudioNoise, EpisodeConfig, EpisodeError, GridMap, MapError, World,
};
use crate::metrics::MetricsError;
use crate::oracle::OracleConfig;

pub use experiment::{
    ablate_branch, ablate_delta, curve_csv, delta_tag, evaluate, limit_tag, resolve_policy,
    run_benchmark, sweep_limit, train, Evaluation, Experiment, FEEDBACK_GT_ACTIONS,
    FEEDBACK_LANGUAGE,
};
pub use report::{Report, ReportRow};

pub const STANDARD_MAPS: [(&str, &str); 10] = [
    ("suite_00", include_str!("../../assets/maps/suite_00.txt")),
    ("suite_01", include_str!("../../assets/maps/suite_01.txt")),
    ("suite_02", include_str!("../../assets/maps/suite_02.txt")),
    ("suite_03", include_str!("../../assets/maps/suite_03.txt")),
    ("suite_04", include_str!("../../assets/maps/suite_04.txt")),
    ("suite_05", include_str!("../../assets/maps/suite_05.txt")),
    ("suite_06", include_str!("../../assets/maps/suite_06.txt")),
    ("suite_07", include_str!("../../assets/maps/suite_07.txt")),
    ("suite_08", include_str!("../../assets/maps/suite_08.txt")),
    ("suite_09", include_str!("../../assets/maps/suite_09.txt")),
];

/// Episode seeds are fixed per map slot, so every experiment seed sees the same episodes.
const TEST_SEED_BASE: u64 = 1000;
const TRAIN_SEED_BASE: u64 = 900_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("map {path}: {source}")]
    Map { path: String, source: MapError },
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Map { .. })
    }
}

impl From<ParamError> for HarnessError {
    fn from(e: ParamError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

/// Where the selector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorSource {
    /// Loaded from `weights` if set, otherwise trained per seed on the training split.
    #[default]
    Trained,
    Random,
    /// Random option choice over the first steps only.
    RandomEarly,
    Uniform,
    ModelUncertainty,
    /// No interaction at all.
    NavOnly,
}

impl SelectorSource {
    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            SelectorSource::Random => Some(BaselineKind::Random),
            SelectorSource::RandomEarly => Some(BaselineKind::RandomEarly),
            SelectorSource::Uniform => Some(BaselineKind::Uniform),
            SelectorSource::ModelUncertainty => Some(BaselineKind::ModelUncertainty),
            SelectorSource::Trained | SelectorSource::NavOnly => None,
        }
    }
}

/// Everything an experiment needs. Read from TOML; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Map files; empty means the built-in ten-map suite.
    pub maps: Vec<PathBuf>,
    pub test_episodes_per_map: usize,
    pub train_episodes_per_map: usize,
    /// One training run and one evaluation pass per seed.
    pub seeds: Vec<u64>,
    pub selector: SelectorSource,
    /// Trained weights (JSON) used instead of training.
    pub weights: Option<PathBuf>,
    pub branch: BranchSetup,
    /// Hard budgets for the query-limit sweep.
    pub limits: Vec<u32>,
    /// Question-penalty weights for the delta ablation.
    pub deltas: Vec<f64>,
    pub episode: EpisodeConfig,
    pub oracle: OracleConfig,
    pub penalty: PenaltyParams,
    pub agent: AgentConfig,
    pub trainer: TrainerConfig,
}

/// Episode settings of the standard suite.
pub fn standard_episode_config() -> EpisodeConfig {
    EpisodeConfig {
        horizon: 70,
        distractors: 3,
        silent_mean: 50.0,
        duration_mean: 8.0,
        min_start_distance: 4,
        noise: AudioNoise {
            sigma_bearing_deg: 30.0,
            ..AudioNoise::default()
        },
        ..EpisodeConfig::default()
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            maps: Vec::new(),
            test_episodes_per_map: 20,
            train_episodes_per_map: 50,
            seeds: vec![0, 1, 2, 3, 4],
            selector: SelectorSource::Trained,
            weights: None,
            branch: BranchSetup::ThreeBranch,
            limits: vec![1, 2, 3, 4, 5],
            deltas: vec![0.0, 0.5, 1.0],
            episode: standard_episode_config(),
            oracle: OracleConfig::default(),
            penalty: PenaltyParams::default(),
            agent: AgentConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.test_episodes_per_map == 0 {
            return bad("test_episodes_per_map must be positive");
        }
        if self.selector == SelectorSource::Trained
            && self.weights.is_none()
            && self.train_episodes_per_map == 0
        {
            return bad("a trained selector needs weights or training episodes");
        }
        if self.limits.is_empty() || self.deltas.is_empty() {
            return bad("limits and deltas must not be empty");
        }
        for p in self.maps.iter().chain(&self.weights) {
            if !p.is_file() {
                return Err(HarnessError::Config(format!(
                    "no such file: {}",
                    p.display()
                )));
            }
        }
        self.penalty.validate()?;
        for &d in &self.deltas {
            PenaltyParams {
                delta_ques: d,
                ..self.penalty
            }
            .validate()?;
        }
        if self.oracle.horizon != self.penalty.nu as usize {
            return bad("oracle.horizon must equal penalty.nu");
        }
        Ok(())
    }

    /// Runner settings; the agent's audio noise model matches the episodes'.
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            agent: self.agent,
            penalty: self.penalty,
            branch: self.branch,
            audio_noise: self.episode.noise,
        }
    }

    pub fn load_maps(&self) -> Result<Vec<GridMap>, HarnessError> {
        if self.maps.is_empty() {
            return STANDARD_MAPS
                .iter()
                .map(|(id, text)| {
                    load_map(text)
                        .map(|m| m.with_id(*id))
                        .map_err(|source| HarnessError::Map {
                            path: (*id).to_string(),
                            source,
                        })
                })
                .collect();
        }
        self.maps
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p)?;
                let id = p.file_stem().map_or_else(
                    || p.display().to_string(),
                    |s| s.to_string_lossy().into_owned(),
                );
                load_map(&text)
                    .map(|m| m.with_id(id))
                    .map_err(|source| HarnessError::Map {
                        path: p.display().to_string(),
                        source,
                    })
            })
            .collect()
    }

    pub fn load_weights(&self) -> Result<Option<SelectorParams>, HarnessError> {
        let Some(p) = &self.weights else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(p)?;
        let w: SelectorParams = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
        if !w.is_finite() {
            return Err(HarnessError::Config(format!(
                "{}: non-finite weights",
                p.display()
            )));
        }
        Ok(Some(w))
    }

    pub fn suite(&self) -> Result<Suite, HarnessError> {
        let maps = self.load_maps()?;
        let build = |base: u64, stride: u64, per_map: usize| -> Result<Vec<World>, HarnessError> {
            let mut worlds = Vec::with_capacity(maps.len() * per_map);
            for (i, map) in maps.iter().enumerate() {
                for s in 0..per_map as u64 {
                    let ep = generate_episode(map, &self.episode, base + i as u64 * stride + s)?;
                    worlds.push(World::new(map.clone(), ep)?);
                }
            }
            Ok(worlds)
        };
        Ok(Suite {
            test: build(TEST_SEED_BASE, 100, self.test_episodes_per_map)?,
            train: build(TRAIN_SEED_BASE, 1000, self.train_episodes_per_map)?,
        })
    }
}

/// Fixed test and training episodes.
#[derive(Debug, Clone)]
pub struct Suite {
    pub test: Vec<World>,
    pub train: Vec<World>,
}
