//! Parallel batched Reptile.
//!
//! Each outer iteration samples a meta-batch of tasks, adapts a copy of the
//! current initialization to every task with a few plain SGD steps (in
//! parallel, one independent random stream per task), then moves the
//! initialization toward the mean of the adapted candidates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_weights, sgd_steps_with_loss, Layout, Minibatch, WeightVector};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::tasks::{sample_minibatch, sample_task, GaussianTask, TaskClassConfig};

// Stream tags keep the initialization, training and evaluation draws apart.
const TAG_INIT: u64 = 0x1417;
const TAG_TRAIN: u64 = 0x7AA1;
const TAG_EVAL: u64 = 0xE7A1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReptileConfig {
    pub inner_step: f64,
    pub inner_batch: usize,
    pub inner_iters: usize,
    pub outer_step: f64,
    pub outer_iters: usize,
    pub meta_batch: usize,
    pub seed: u64,
}

impl Default for ReptileConfig {
    fn default() -> Self {
        Self {
            inner_step: 0.02,
            inner_batch: 5,
            inner_iters: 8,
            outer_step: 0.1,
            outer_iters: 10_000,
            meta_batch: 10,
            seed: 0,
        }
    }
}

impl ReptileConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.inner_step) || !positive(self.outer_step) {
            return Err(Error::Config(format!(
                "step sizes must be positive (inner {}, outer {})",
                self.inner_step, self.outer_step
            )));
        }
        if self.inner_batch == 0 || self.meta_batch == 0 {
            return Err(Error::Config("inner_batch and meta_batch must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaState {
    pub theta: WeightVector,
    pub iteration: usize,
}

/// Per-iteration progress handed to the training observer.
#[derive(Clone, Copy, Debug)]
pub struct Progress<'a> {
    pub iteration: usize,
    /// Mean over the meta-batch of each task's last inner-step loss.
    pub mean_inner_loss: f64,
    pub state: &'a MetaState,
}

fn adapt<R: rand::Rng>(
    theta: &WeightVector,
    task: &GaussianTask,
    task_cfg: &TaskClassConfig,
    cfg: &ReptileConfig,
    rng: &mut R,
) -> Result<(WeightVector, f64)> {
    if cfg.inner_iters == 0 || cfg.inner_step == 0.0 {
        return Ok((theta.clone(), f64::NAN));
    }
    let batches: Vec<Minibatch> = (0..cfg.inner_iters)
        .map(|_| sample_minibatch(task, task_cfg, cfg.inner_batch, rng))
        .collect::<Result<_>>()?;
    let (w, loss) = sgd_steps_with_loss(theta, batches, cfg.inner_step)?;
    Ok((w, loss.unwrap_or(f64::NAN)))
}

/// Candidate weights for one task: `theta` after `inner_iters` SGD steps on
/// fresh minibatches.
pub fn inner_adapt<R: rand::Rng>(
    theta: &WeightVector,
    task: &GaussianTask,
    task_cfg: &TaskClassConfig,
    cfg: &ReptileConfig,
    rng: &mut R,
) -> Result<WeightVector> {
    adapt(theta, task, task_cfg, cfg, rng).map(|(w, _)| w)
}

/// `theta + outer_step * mean_i(W_i - theta)`.
///
/// The candidate mean is accumulated incrementally so identical candidates
/// reproduce their value exactly, and the interpolation is evaluated from the
/// nearer endpoint so `outer_step` 0 and 1 return `theta` and the mean
/// bit-for-bit.
pub fn meta_step(state: &MetaState, candidates: &[WeightVector], cfg: &ReptileConfig) -> Result<MetaState> {
    if candidates.is_empty() {
        return Err(Error::Structure("meta_step needs at least one candidate".into()));
    }
    let layout = state.theta.layout();
    if let Some(i) = candidates.iter().position(|c| c.layout() != layout) {
        return Err(Error::Structure(format!("candidate {i} has a different layout")));
    }

    let mut mean = candidates[0].values().to_vec();
    for (k, c) in candidates.iter().enumerate().skip(1) {
        let inv = 1.0 / (k + 1) as f64;
        for (m, &v) in mean.iter_mut().zip(c.values()) {
            *m += (v - *m) * inv;
        }
    }

    let alpha = cfg.outer_step;
    let values: Vec<f64> = state
        .theta
        .values()
        .iter()
        .zip(&mean)
        .map(|(&t, &m)| {
            if alpha < 0.5 {
                t + alpha * (m - t)
            } else {
                m - (1.0 - alpha) * (m - t)
            }
        })
        .collect();

    let iteration = state.iteration + 1;
    let theta = WeightVector::from_values(layout.clone(), values).map_err(|e| Error::Divergence {
        iteration,
        detail: e.to_string(),
    })?;
    Ok(MetaState { theta, iteration })
}

pub fn initial_state(cfg: &ReptileConfig, layout: &Layout) -> MetaState {
    MetaState {
        theta: init_weights(layout, derive_seed(cfg.seed, &[TAG_INIT])),
        iteration: 0,
    }
}

fn task_stream(seed: u64, iteration: usize, task_index: usize) -> StreamRng {
    stream(seed, &[TAG_TRAIN, iteration as u64, task_index as u64])
}

/// Runs the full outer loop. `observer` sees every completed iteration and
/// may abort training by returning an error.
///
/// Candidates are computed on the current rayon pool and reduced in task
/// order, so the result is identical for any number of threads.
pub fn train<F>(
    cfg: &ReptileConfig,
    task_cfg: &TaskClassConfig,
    layout: &Layout,
    mut observer: F,
) -> Result<MetaState>
where
    F: FnMut(&Progress<'_>) -> Result<()>,
{
    cfg.validate()?;
    task_cfg.validate()?;
    let mut state = initial_state(cfg, layout);

    for it in 0..cfg.outer_iters {
        let results: Vec<Result<(WeightVector, f64)>> = (0..cfg.meta_batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = task_stream(cfg.seed, it, i);
                let task = sample_task(task_cfg, &mut rng);
                adapt(&state.theta, &task, task_cfg, cfg, &mut rng)
            })
            .collect();

        let mut candidates = Vec::with_capacity(cfg.meta_batch);
        let mut loss_sum = 0.0;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok((w, loss)) => {
                    loss_sum += loss;
                    candidates.push(w);
                }
                Err(Error::Divergence { iteration, detail }) => {
                    return Err(Error::Divergence {
                        iteration: it + 1,
                        detail: format!("task {i}, inner step {iteration}: {detail}"),
                    })
                }
                Err(e) => return Err(e),
            }
        }

        state = meta_step(&state, &candidates, cfg)?;
        observer(&Progress {
            iteration: state.iteration,
            mean_inner_loss: loss_sum / cfg.meta_batch as f64,
            state: &state,
        })?;
    }
    Ok(state)
}

/// Mean held-out loss after adapting `theta` to each of `n_tasks` fixed
/// evaluation tasks. The task set and batches depend only on `eval_seed`.
pub fn mean_adapted_loss(
    theta: &WeightVector,
    cfg: &ReptileConfig,
    task_cfg: &TaskClassConfig,
    n_tasks: usize,
    eval_seed: u64,
) -> Result<f64> {
    let losses: Vec<Result<f64>> = (0..n_tasks)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(eval_seed, &[TAG_EVAL, i as u64]);
            let task = sample_task(task_cfg, &mut rng);
            let adapted = inner_adapt(theta, &task, task_cfg, cfg, &mut rng)?;
            let held_out = sample_minibatch(&task, task_cfg, 64, &mut rng)?;
            crate::nn::mse_loss_grad(&adapted, &held_out).map(|(l, _)| l)
        })
        .collect();
    let total: f64 = losses.into_iter().collect::<Result<Vec<_>>>()?.iter().sum();
    Ok(total / n_tasks as f64)
}
