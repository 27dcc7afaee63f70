//! Run configuration: one TOML file per run, overridable by flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use hsmtl::corpus::{CorpusFormat, HierarchyPolicy};
use hsmtl::encoder::{EncoderConfig, EncoderMode};
use hsmtl::model::{HeadSettings, ModelConfig};
use hsmtl::training::{GridSpec, TrainConfig};
use hsmtl::{Error, TaskMask};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub format: Option<CorpusFormat>,
    /// JSONL sidecar with `{id, embedding}` rows, for passthrough mode.
    pub embeddings: Option<PathBuf>,
    pub hierarchy_policy: HierarchyPolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub head: HeadSettings,
    pub train: TrainConfig,
    pub grid: GridSpec,
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub seed: Option<u64>,
    pub task_mask: Option<TaskMask>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub peak_lr: Option<f64>,
    pub warmup_steps: Option<u64>,
    pub finetune_epochs: Option<usize>,
}

/// Which parts of the config a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Train,
    Grid,
    Finetune,
}

pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: Option<PathBuf>,
}

impl RunConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder.clone(),
            head: self.head,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.data.train, &mut self.data.dev, &mut self.data.embeddings]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.train {
            self.data.train = Some(p.clone());
        }
        if let Some(p) = &o.dev {
            self.data.dev = Some(p.clone());
        }
        if let Some(p) = &o.embeddings {
            self.data.embeddings = Some(p.clone());
        }
        let t = &mut self.train;
        t.seed = o.seed.unwrap_or(t.seed);
        t.task_mask = o.task_mask.unwrap_or(t.task_mask);
        t.epochs = o.epochs.unwrap_or(t.epochs);
        t.batch_size = o.batch_size.unwrap_or(t.batch_size);
        t.peak_lr = o.peak_lr.unwrap_or(t.peak_lr);
        t.warmup_steps = o.warmup_steps.unwrap_or(t.warmup_steps);
        t.finetune_epochs = o.finetune_epochs.unwrap_or(t.finetune_epochs);
    }

    /// Every problem with the config, not just the first.
    pub fn problems(&self, purpose: Purpose) -> Vec<String> {
        let mut problems = Vec::new();
        if purpose != Purpose::Finetune {
            problems.extend(self.model().validate());
        }
        problems.extend(self.train.validate());
        if purpose == Purpose::Grid {
            problems.extend(self.grid.validate());
        }
        for (key, path) in [("data.train", &self.data.train), ("data.dev", &self.data.dev)] {
            match path {
                None => problems.push(format!("{key} is not set")),
                Some(p) if !p.is_file() => problems.push(format!("{key}: no such file {}", p.display())),
                Some(_) => {}
            }
        }
        match &self.data.embeddings {
            Some(p) if !p.is_file() => problems.push(format!("data.embeddings: no such file {}", p.display())),
            None if purpose != Purpose::Finetune && self.encoder.mode == EncoderMode::Passthrough => {
                problems.push("data.embeddings is required in passthrough mode".into())
            }
            _ => {}
        }
        problems
    }
}

pub fn load(path: Option<&Path>, overrides: &Overrides, purpose: Purpose) -> anyhow::Result<LoadedConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            let mut c: RunConfig = toml::from_str(&text)
                .map_err(|e| Error::Config(vec![format!("{}: {}", p.display(), e.message())]))?;
            c.resolve_paths(p.parent().unwrap_or(Path::new(".")));
            c
        }
        None => RunConfig::default(),
    };
    config.apply(overrides);
    let problems = config.problems(purpose);
    if !problems.is_empty() {
        return Err(Error::Config(problems).into());
    }
    Ok(LoadedConfig {
        config,
        path: path.map(Path::to_path_buf),
    })
}

pub fn to_toml(config: &RunConfig) -> anyhow::Result<String> {
    toml::to_string(config).context("serializing config")
}
