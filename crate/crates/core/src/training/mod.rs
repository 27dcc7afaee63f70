//! Joint multitask optimization.
//!
//! Mini-batch AdamW on the mean masked joint NLL, under a warmup/linear-decay
//! schedule. The dev set is scored `evals_per_epoch` times per epoch at equal
//! step intervals, and each subtask keeps the checkpoint with its best dev
//! macro-F1 (strict improvement; earlier step wins ties).

pub mod checkpoint;
pub mod optimizer;
pub mod schedule;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoder::{self, EncoderInput};
use crate::ensemble::{predict, PredictionTriple};
use crate::error::{Error, Result};
use crate::evaluation::task_metrics;
use crate::labels::{LabelTriple, Task, TaskMask};
use crate::model::{accumulate_gradients, forward_input, tensor_task, ModelConfig, ModelParams};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use optimizer::{adamw_step, AdamWConfig, AdamWState};
pub use schedule::{lr_at, WarmupLinearDecay};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub epochs: usize,
    pub evals_per_epoch: usize,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub task_mask: TaskMask,
    pub finetune_epochs: usize,
    /// Warmup for the HSC finetuning stage; falls back to `warmup_steps`.
    pub finetune_warmup_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            peak_lr: 1e-5,
            warmup_steps: 500,
            epochs: 10,
            evals_per_epoch: 4,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            task_mask: TaskMask::ALL,
            finetune_epochs: 2,
            finetune_warmup_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("train.batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            problems.push("train.epochs must be >= 1".into());
        }
        if self.evals_per_epoch == 0 {
            problems.push("train.evals_per_epoch must be >= 1".into());
        }
        if !(self.peak_lr.is_finite() && self.peak_lr > 0.0) {
            problems.push("train.peak_lr must be positive".into());
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            problems.push("train.weight_decay must be >= 0".into());
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                problems.push(format!("train.{name} must lie in [0, 1)"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            problems.push("train.adam_eps must be positive".into());
        }
        if self.task_mask.is_empty() {
            problems.push("train.task_mask selects no task".into());
        }
        problems
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn total_steps(&self, n: usize) -> u64 {
        (self.epochs * self.steps_per_epoch(n)) as u64
    }
}

/// Within-epoch step counts (1-based) after which the dev set is scored.
pub fn eval_points(steps_per_epoch: usize, evals_per_epoch: usize) -> Vec<usize> {
    let mut points: Vec<usize> = (1..=evals_per_epoch)
        .map(|k| (k * steps_per_epoch).div_ceil(evals_per_epoch))
        .filter(|&p| p > 0)
        .collect();
    points.dedup();
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_f1_offd: f64,
    pub dev_f1_hsd: f64,
    pub dev_f1_hsc: f64,
}

impl TrainLogRow {
    pub fn dev_f1(&self, task: Task) -> f64 {
        match task {
            Task::Offd => self.dev_f1_offd,
            Task::Hsd => self.dev_f1_hsd,
            Task::Hsc => self.dev_f1_hsc,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint per subtask in the task mask.
    pub best: BTreeMap<Task, Checkpoint>,
    pub log: Vec<TrainLogRow>,
    pub final_params: ModelParams,
}

/// Encoder inputs paired with gold labels.
pub fn prepare_corpus(corpus: &Corpus, cfg: &ModelConfig) -> Result<Vec<(EncoderInput, LabelTriple)>> {
    corpus
        .samples()
        .iter()
        .map(|s| Ok((encoder::prepare(s, &cfg.encoder)?, s.gold()?)))
        .collect()
}

/// Argmax predictions for prepared inputs.
pub fn predict_prepared(
    data: &[(EncoderInput, LabelTriple)],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<Vec<PredictionTriple>> {
    data.iter()
        .map(|(x, _)| forward_input(x, params, cfg).map(|p| predict(&p)))
        .collect()
}

fn dev_scores(
    dev: &[(EncoderInput, LabelTriple)],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<[f64; 3]> {
    let preds = predict_prepared(dev, params, cfg)?;
    let gold: Vec<LabelTriple> = dev.iter().map(|(_, g)| *g).collect();
    let mut out = [0.0; 3];
    for (i, task) in Task::ALL.into_iter().enumerate() {
        out[i] = task_metrics(&gold, &preds, task)?.f1;
    }
    Ok(out)
}

/// Trains a freshly initialized model.
pub fn train(train_corpus: &Corpus, dev_corpus: &Corpus, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let params = ModelParams::init(model_cfg, cfg.seed);
    train_from(params, train_corpus, dev_corpus, model_cfg, cfg, cfg.warmup_steps)
}

/// Trains starting from `params` with a fresh optimizer and schedule.
pub fn train_from(
    mut params: ModelParams,
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    warmup_steps: u64,
) -> Result<TrainOutcome> {
    let mut problems = model_cfg.validate();
    problems.extend(cfg.validate());
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if train_corpus.is_empty() {
        return Err(Error::Empty("training corpus is empty"));
    }
    if dev_corpus.is_empty() {
        return Err(Error::Empty("dev corpus is empty"));
    }
    params.check(model_cfg)?;

    let train_data = prepare_corpus(train_corpus, model_cfg)?;
    let dev_data = prepare_corpus(dev_corpus, model_cfg)?;
    let n = train_data.len();
    let steps_per_epoch = cfg.steps_per_epoch(n);
    let schedule = WarmupLinearDecay::new(cfg.peak_lr, warmup_steps, cfg.total_steps(n))?;
    let evals = eval_points(steps_per_epoch, cfg.evals_per_epoch);
    let adamw = cfg.adamw();
    let mask = cfg.task_mask;
    let trainable = |name: &str| tensor_task(name).is_none_or(|t| mask.contains(t));

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = ModelParams::zeros(model_cfg);
    let mut state = AdamWState::default();
    let mut best: BTreeMap<Task, Checkpoint> = BTreeMap::new();
    let mut log = Vec::new();
    let mut step: u64 = 0;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut lr = 0.0;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut next_eval = evals.iter().peekable();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.set_zero();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (input, gold) = &train_data[i];
                batch_loss += accumulate_gradients(input, gold, &params, model_cfg, mask, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for (_, g) in grads.tensors_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            loss_sum += batch_loss * scale;
            loss_count += 1;

            lr = schedule.lr_at(step);
            {
                let grad_views = grads.tensors();
                let grad_list: Vec<(&str, &[f64])> = grad_views
                    .iter()
                    .filter(|t| trainable(&t.name))
                    .map(|t| (t.name.as_str(), t.data))
                    .collect();
                let mut param_list: Vec<(String, &mut [f64])> =
                    params.tensors_mut().into_iter().filter(|(name, _)| trainable(name)).collect();
                adamw_step(&mut param_list, &grad_list, &mut state, lr, &adamw)?;
            }
            step += 1;

            if next_eval.peek().is_some_and(|&&p| p == b + 1) {
                next_eval.next();
                let scores = dev_scores(&dev_data, &params, model_cfg)?;
                let row = TrainLogRow {
                    step,
                    lr,
                    train_loss: loss_sum / loss_count as f64,
                    dev_f1_offd: scores[0],
                    dev_f1_hsd: scores[1],
                    dev_f1_hsc: scores[2],
                };
                log::debug!("step {step}: loss {:.4} dev f1 {:?}", row.train_loss, scores);
                loss_sum = 0.0;
                loss_count = 0;
                for task in mask.tasks() {
                    let f1 = row.dev_f1(task);
                    if best.get(&task).is_none_or(|c| f1 > c.meta.dev_f1_macro) {
                        best.insert(
                            task,
                            Checkpoint {
                                meta: CheckpointMeta {
                                    format_version: checkpoint::FORMAT_VERSION,
                                    subtask: Some(task),
                                    dev_f1_macro: f1,
                                    step,
                                    model: model_cfg.clone(),
                                    train: cfg.clone(),
                                },
                                params: params.clone(),
                            },
                        );
                    }
                }
                log.push(row);
            }
        }
    }
    let _ = lr;
    Ok(TrainOutcome {
        best,
        log,
        final_params: params,
    })
}

/// Continues training `ckpt` on HSC alone with a fresh schedule and optimizer.
///
/// Returns the checkpoint with the best dev HSC macro-F1, counting the
/// starting point; with zero finetune epochs the input is returned as is.
pub fn finetune_hsc(ckpt: &Checkpoint, train_corpus: &Corpus, dev_corpus: &Corpus, cfg: &TrainConfig) -> Result<Checkpoint> {
    if cfg.finetune_epochs == 0 {
        return Ok(ckpt.clone());
    }
    let model_cfg = &ckpt.meta.model;
    let ft_cfg = TrainConfig {
        epochs: cfg.finetune_epochs,
        task_mask: TaskMask::only(Task::Hsc),
        ..cfg.clone()
    };
    let warmup = cfg.finetune_warmup_steps.unwrap_or(cfg.warmup_steps);
    let start_f1 = dev_scores(&prepare_corpus(dev_corpus, model_cfg)?, &ckpt.params, model_cfg)?[2];
    let outcome = train_from(ckpt.params.clone(), train_corpus, dev_corpus, model_cfg, &ft_cfg, warmup)?;
    let tuned = outcome
        .best
        .get(&Task::Hsc)
        .cloned()
        .ok_or(Error::Empty("finetuning produced no evaluation"))?;
    if tuned.meta.dev_f1_macro > start_f1 {
        Ok(tuned)
    } else {
        let mut kept = ckpt.clone();
        kept.meta.subtask = Some(Task::Hsc);
        kept.meta.dev_f1_macro = start_f1;
        Ok(kept)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub peak_lrs: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            batch_sizes: vec![2, 4, 8, 16],
            peak_lrs: vec![1e-5, 5e-6, 1e-6],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.batch_sizes.is_empty() || self.peak_lrs.is_empty() {
            problems.push("grid lists must be nonempty".into());
        }
        problems
    }

    pub fn len(&self) -> usize {
        self.batch_sizes.len() * self.peak_lrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One config per (batch size, peak lr) pair, batch size major, with
    /// seeds `base.seed + run_index`.
    pub fn run_configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &batch_size in &self.batch_sizes {
            for &peak_lr in &self.peak_lrs {
                let index = out.len() as u64;
                out.push(TrainConfig {
                    batch_size,
                    peak_lr,
                    seed: base.seed + index,
                    ..base.clone()
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub index: usize,
    pub config: TrainConfig,
    pub best: BTreeMap<Task, Checkpoint>,
    pub log: Vec<TrainLogRow>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub runs: Vec<GridRun>,
    /// Run indices per subtask, best dev macro-F1 first (ties: lower index).
    pub rankings: BTreeMap<Task, Vec<usize>>,
}

/// Ranks runs per subtask by the dev F1 of their best checkpoint.
pub fn rank_runs<'a>(scores: impl Iterator<Item = (usize, &'a BTreeMap<Task, f64>)> + Clone, mask: TaskMask) -> BTreeMap<Task, Vec<usize>> {
    mask.tasks()
        .map(|task| {
            let mut ranked: Vec<(usize, f64)> = scores
                .clone()
                .filter_map(|(i, s)| s.get(&task).map(|f| (i, *f)))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            (task, ranked.into_iter().map(|(i, _)| i).collect())
        })
        .collect()
}

/// Independent training runs over the grid; runs execute in parallel and
/// results are returned in grid order.
pub fn grid_search(
    train_corpus: &Corpus,
    dev_corpus: &Corpus,
    grid: &GridSpec,
    model_cfg: &ModelConfig,
    base: &TrainConfig,
) -> Result<GridOutcome> {
    let problems = grid.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let runs: Vec<GridRun> = grid
        .run_configs(base)
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| {
            let outcome = train(train_corpus, dev_corpus, model_cfg, &config)?;
            Ok(GridRun {
                index,
                config,
                best: outcome.best,
                log: outcome.log,
            })
        })
        .collect::<Result<_>>()?;
    let scores: Vec<BTreeMap<Task, f64>> = runs
        .iter()
        .map(|r| r.best.iter().map(|(t, c)| (*t, c.meta.dev_f1_macro)).collect())
        .collect();
    let rankings = rank_runs(scores.iter().enumerate(), base.task_mask);
    Ok(GridOutcome { runs, rankings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_points_are_equally_spaced() {
        assert_eq!(eval_points(100, 4), vec![25, 50, 75, 100]);
        assert_eq!(eval_points(10, 4), vec![3, 5, 8, 10]);
        assert_eq!(eval_points(2, 4), vec![1, 2]);
        assert_eq!(eval_points(7, 1), vec![7]);
    }

    #[test]
    fn grid_configs() {
        let base = TrainConfig {
            seed: 100,
            ..TrainConfig::default()
        };
        let runs = GridSpec::default().run_configs(&base);
        assert_eq!(runs.len(), 12);
        assert_eq!(runs[0].batch_size, 2);
        assert_eq!(runs[0].peak_lr, 1e-5);
        assert_eq!(runs[11].batch_size, 16);
        assert_eq!(runs[11].peak_lr, 1e-6);
        assert!(runs.iter().enumerate().all(|(i, c)| c.seed == 100 + i as u64));
    }

    #[test]
    fn ranking_is_a_permutation() {
        let scores: Vec<BTreeMap<Task, f64>> = [0.2, 0.9, 0.5, 0.9]
            .iter()
            .map(|f| Task::ALL.iter().map(|t| (*t, *f)).collect())
            .collect();
        let r = rank_runs(scores.iter().enumerate(), TaskMask::ALL);
        assert_eq!(r[&Task::Hsc], vec![1, 3, 2, 0]);
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn config_validation_lists_everything() {
        let cfg = TrainConfig {
            batch_size: 0,
            epochs: 0,
            peak_lr: -1.0,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.validate().len(), 3);
    }
}
