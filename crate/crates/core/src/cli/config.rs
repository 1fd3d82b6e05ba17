use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ContextStrategy, DatasetConfig, Task};
use crate::denoiser::{DenoiserConfig, ModelConfig};
use crate::diffusion::{TrainConfig, TrainSetup};
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::noise_field::NoiseConfig;
use crate::schedule::{NoiseSchedule, ScheduleConfig, TimestepGrid};

/// Sampling defaults for `fundiff sample`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Sampler steps; `None` uses `schedule.num_steps`.
    pub steps: Option<usize>,
    /// Context size; `None` uses `dataset.context_size`.
    pub context_size: Option<usize>,
    pub context_strategy: ContextStrategy,
    /// Nodes per axis of the dumped evaluation grid (0 disables it).
    pub grid: usize,
    /// Number of trace frames to render (0 disables tracing).
    pub trace: usize,
    pub seed: u64,
    /// Training-family sample whose condition is used by default.
    pub sample_index: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            steps: None,
            context_size: None,
            context_strategy: ContextStrategy::Uniform,
            grid: 128,
            trace: 0,
            seed: 0,
            sample_index: 0,
        }
    }
}

/// Every setting of a run in one document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub noise: NoiseConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
}

fn at(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::Config {
            path: path.to_owned(),
            message: other.to_string(),
        },
    }
}

impl RunConfig {
    /// Parses a JSON document, reporting the key path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        NoiseSchedule::from_config(&self.schedule).map_err(at("schedule"))?;
        TimestepGrid::new(self.schedule.num_steps, self.schedule.spacing).map_err(at("schedule.num_steps"))?;
        self.dataset.validate().map_err(at("dataset"))?;
        self.denoiser_config().validate().map_err(at("model"))?;
        self.train.validate().map_err(at("train"))?;
        let dim = self.dataset.task.domain().dim();
        let res = self.noise.resolution_for(dim);
        if res.len() != dim || res.iter().any(|&r| r < 2) {
            return Err(Error::Config {
                path: "noise.resolution".into(),
                message: format!("need {dim} entries, each >= 2"),
            });
        }
        if self.sample.steps == Some(0) {
            return Err(Error::Config {
                path: "sample.steps".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.sample.context_size == Some(0) {
            return Err(Error::Config {
                path: "sample.context_size".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.sample.grid == 1 {
            return Err(Error::Config {
                path: "sample.grid".into(),
                message: "must be 0 (off) or >= 2".into(),
            });
        }
        if self.eval.num_samples == 0 || self.eval.contour_resolution < 2 || !(self.eval.fd_step > 0.0) {
            return Err(Error::Config {
                path: "eval".into(),
                message: "need num_samples >= 1, contour_resolution >= 2, fd_step > 0".into(),
            });
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        crate::denoiser::hex(&Sha256::digest(json))
    }

    pub fn task(&self) -> Task {
        self.dataset.task
    }

    pub fn denoiser_config(&self) -> DenoiserConfig {
        DenoiserConfig::for_task(self.model.clone(), self.dataset.task)
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule::from_config(&self.schedule).expect("validated")
    }

    pub fn train_setup(&self) -> TrainSetup {
        TrainSetup {
            schedule: self.schedule(),
            loss_weight: self.schedule.loss_weight,
            dataset: self.dataset.clone(),
            noise: self.noise.clone(),
            train: self.train.clone(),
        }
    }

    pub fn sample_steps(&self) -> usize {
        self.sample.steps.unwrap_or(self.schedule.num_steps)
    }

    pub fn noise_resolution(&self) -> Vec<usize> {
        self.noise.resolution_for(self.dataset.task.domain().dim())
    }
}
