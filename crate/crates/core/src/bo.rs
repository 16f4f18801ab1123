//! The Bayesian optimization loop and the k-shot benchmark comparing priors.
//!
//! Each acquisition step gets its own random stream keyed by the step index,
//! so the first `k` steps of a longer run are exactly the `k`-shot run. The
//! benchmark relies on this to score every `k` from a single run per cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{mc_acquire_argmax, AcquisitionKind, McConfig};
use crate::error::{Error, Result};
use crate::gp::{fit, GpPosterior, KernelParams, ObservationSet};
use crate::prior::{PriorDensity, PriorKind, DEFAULT_GRID_SIZE};
use crate::reptile::MetaState;
use crate::rng::{derive_seed, stream};
use crate::tasks::{sample_task, GaussianTask, TaskClassConfig};

const TAG_STEP: u64 = 0xB057;
const TAG_BENCH_TASK: u64 = 0xBE7A;
const TAG_BENCH_RUN: u64 = 0xBE70;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoRunConfig {
    pub shots: usize,
    pub prior_kind: PriorKind,
    pub acquisition: AcquisitionKind,
    pub kernel: KernelParams,
    pub mc: McConfig,
    pub eval_grid_size: usize,
    pub prior_grid_size: usize,
    pub seed: u64,
}

impl Default for BoRunConfig {
    fn default() -> Self {
        Self {
            shots: 10,
            prior_kind: PriorKind::Meta,
            acquisition: AcquisitionKind::ExpectedImprovement,
            kernel: KernelParams::default(),
            mc: McConfig::default(),
            eval_grid_size: 256,
            prior_grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
        }
    }
}

impl BoRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::Config("shots must be >= 1".into()));
        }
        if self.eval_grid_size < 2 {
            return Err(Error::Config("eval_grid_size must be >= 2".into()));
        }
        if self.mc.sample_count == 0 {
            return Err(Error::Config("mc sample count must be >= 1".into()));
        }
        self.kernel.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub x: f64,
    pub y: f64,
    pub acquisition_score: f64,
    pub fallback: bool,
}

#[derive(Clone, Debug)]
pub struct BoTrace {
    pub steps: Vec<TraceStep>,
    /// Error of the posterior mean against the task after each step.
    pub mse_per_step: Vec<f64>,
    pub final_mse: f64,
    pub observations: ObservationSet,
    pub posterior: GpPosterior,
}

/// Mean squared gap between the posterior mean and the task density on an
/// evenly spaced grid over the boundary.
pub fn posterior_mse(post: &GpPosterior, task: &GaussianTask, grid: &[f64]) -> f64 {
    let sum: f64 = grid
        .iter()
        .map(|&x| {
            let d = post.predict(x).0 - task.density(x);
            d * d
        })
        .sum();
    sum / grid.len() as f64
}

pub fn run_bo(
    task: &GaussianTask,
    prior: &PriorDensity,
    task_cfg: &TaskClassConfig,
    cfg: &BoRunConfig,
) -> Result<BoTrace> {
    cfg.validate()?;
    let boundary = task_cfg.boundary;
    let grid = boundary.grid(cfg.eval_grid_size);
    let mut obs = ObservationSet::new();
    let mut post = fit(&obs, &cfg.kernel)?;
    let mut steps = Vec::with_capacity(cfg.shots);
    let mut mse_per_step = Vec::with_capacity(cfg.shots);

    for step in 0..cfg.shots {
        let mut rng = stream(cfg.seed, &[TAG_STEP, cfg.mc.seed, step as u64]);
        // Empty data: compare against the zero prior mean.
        let best_y = obs.best_y().unwrap_or(0.0);
        let sel = mc_acquire_argmax(&post, best_y, cfg.acquisition, prior, &boundary, &cfg.mc, &mut rng)?;
        let y = task_cfg.observe(task, sel.x, &mut rng);
        obs.push(sel.x, y);
        post = fit(&obs, &cfg.kernel).map_err(|e| Error::BoStep {
            step: step + 1,
            source: Box::new(e),
        })?;
        steps.push(TraceStep {
            x: sel.x,
            y,
            acquisition_score: sel.score,
            fallback: sel.fallback,
        });
        mse_per_step.push(posterior_mse(&post, task, &grid));
    }

    Ok(BoTrace {
        final_mse: *mse_per_step.last().expect("shots >= 1"),
        steps,
        mse_per_step,
        observations: obs,
        posterior: post,
    })
}

/// Benchmark sizes. `k_max` shots are scored as k = 1..=k_max.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub eval_iterations: usize,
    pub eval_batch: usize,
    pub k_max: usize,
    pub include_standard_normal: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            eval_iterations: 32,
            eval_batch: 10,
            k_max: 10,
            include_standard_normal: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub k: usize,
    pub mse_uniform: f64,
    pub mse_meta: Option<f64>,
    pub mse_standard_normal: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub seed: u64,
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,mse_uniform,mse_meta\n");
        for r in &self.rows {
            let meta = r.mse_meta.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.k, r.mse_uniform, meta));
        }
        out
    }

    pub fn uniform_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mse_uniform).collect()
    }

    pub fn meta_series(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.mse_meta).collect()
    }
}

/// Least-squares line through `(k, ln mse)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogTrend {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
}

pub fn log_trend(values: &[f64]) -> LogTrend {
    let n = values.len() as f64;
    let xs: Vec<f64> = (1..=values.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    LogTrend {
        slope,
        intercept: my - slope * mx,
        pearson_r: sxy / (sxx * syy).sqrt(),
    }
}

fn build_prior(kind: PriorKind, meta: Option<&MetaState>, task_cfg: &TaskClassConfig, grid: usize) -> Result<PriorDensity> {
    match kind {
        PriorKind::Uniform => PriorDensity::uniform(&task_cfg.boundary, grid),
        PriorKind::StandardNormal => PriorDensity::standard_normal(&task_cfg.boundary, grid),
        PriorKind::Meta => {
            let state = meta.ok_or_else(|| Error::Config("meta prior requested without a trained state".into()))?;
            PriorDensity::from_network(&state.theta, &task_cfg.boundary, grid)
        }
    }
}

/// k-shot benchmark over an explicit task list. Every prior sees the same
/// tasks and the same per-run seeds.
pub fn evaluate_kshot_on(
    tasks: &[GaussianTask],
    meta: Option<&MetaState>,
    template: &BoRunConfig,
    task_cfg: &TaskClassConfig,
    bench: &BenchConfig,
) -> Result<BenchResult> {
    if tasks.is_empty() || bench.eval_batch == 0 || bench.k_max == 0 {
        return Err(Error::Config("benchmark needs tasks, eval_batch >= 1 and k_max >= 1".into()));
    }
    let mut kinds = vec![PriorKind::Uniform];
    if bench.include_standard_normal {
        kinds.push(PriorKind::StandardNormal);
    }
    if meta.is_some() {
        kinds.push(PriorKind::Meta);
    }
    let priors: Vec<PriorDensity> = kinds
        .iter()
        .map(|&k| build_prior(k, meta, task_cfg, template.prior_grid_size))
        .collect::<Result<_>>()?;

    let reps = bench.eval_batch;
    let cells: Vec<(usize, usize, usize)> = (0..priors.len())
        .flat_map(|p| (0..tasks.len()).flat_map(move |t| (0..reps).map(move |r| (p, t, r))))
        .collect();

    let runs: Vec<Result<Vec<f64>>> = cells
        .par_iter()
        .map(|&(p, t, r)| {
            let cfg = BoRunConfig {
                shots: bench.k_max,
                prior_kind: kinds[p],
                seed: derive_seed(template.seed, &[TAG_BENCH_RUN, t as u64, r as u64]),
                ..template.clone()
            };
            run_bo(&tasks[t], &priors[p], task_cfg, &cfg).map(|tr| tr.mse_per_step)
        })
        .collect();
    let runs: Vec<Vec<f64>> = runs.into_iter().collect::<Result<_>>()?;

    // mean over tasks of the mean over repeats, accumulated in cell order
    let per_prior = tasks.len() * reps;
    let means: Vec<Vec<f64>> = (0..priors.len())
        .map(|p| {
            (0..bench.k_max)
                .map(|k| {
                    let block = &runs[p * per_prior..(p + 1) * per_prior];
                    let task_means = block.chunks(reps).map(|rs| rs.iter().map(|m| m[k]).sum::<f64>() / reps as f64);
                    task_means.sum::<f64>() / tasks.len() as f64
                })
                .collect()
        })
        .collect();

    let series = |kind: PriorKind| kinds.iter().position(|&k| k == kind).map(|i| &means[i]);
    let uniform = series(PriorKind::Uniform).expect("uniform always evaluated");
    let rows = (0..bench.k_max)
        .map(|k| BenchRow {
            k: k + 1,
            mse_uniform: uniform[k],
            mse_meta: series(PriorKind::Meta).map(|s| s[k]),
            mse_standard_normal: series(PriorKind::StandardNormal).map(|s| s[k]),
        })
        .collect();
    Ok(BenchResult {
        rows,
        seed: template.seed,
    })
}

/// Samples `eval_iterations` tasks from the class and benchmarks them.
pub fn evaluate_kshot(
    meta: Option<&MetaState>,
    template: &BoRunConfig,
    task_cfg: &TaskClassConfig,
    bench: &BenchConfig,
) -> Result<BenchResult> {
    task_cfg.validate()?;
    let tasks: Vec<GaussianTask> = (0..bench.eval_iterations)
        .map(|i| sample_task(task_cfg, &mut stream(template.seed, &[TAG_BENCH_TASK, i as u64])))
        .collect();
    evaluate_kshot_on(&tasks, meta, template, task_cfg, bench)
}
