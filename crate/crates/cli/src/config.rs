//! Flat `key = value` run configuration.
//!
//! Resolution order, later wins: built-in defaults, config file,
//! `METAPRIOR_SEED` environment variable, command-line flags.

use std::path::{Path, PathBuf};

use metaprior::acquisition::{AcquisitionKind, McConfig};
use metaprior::bo::{BenchConfig, BoRunConfig};
use metaprior::gp::KernelParams;
use metaprior::nn::Layout;
use metaprior::prior::{PriorKind, DEFAULT_GRID_SIZE};
use metaprior::reptile::ReptileConfig;
use metaprior::tasks::{Boundary, TaskClassConfig};
use serde_json::{Map, Value};

use crate::CliError;

pub const SEED_ENV: &str = "METAPRIOR_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verbosity {
    Quiet,
    Normal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,

    pub inner_step: f64,
    pub inner_batch: usize,
    pub inner_iters: usize,
    pub outer_step: f64,
    pub outer_iters: usize,
    pub meta_batch: usize,
    pub model_size: usize,
    pub hidden_layers: usize,

    pub sample_radius: f64,
    pub std_min: f64,
    pub std_max: f64,
    pub noise_var: f64,

    pub kernel_amplitude: f64,
    pub kernel_length_scale: f64,
    /// `None` tracks `noise_var` (see [`KernelParams::for_observation_noise`]).
    pub kernel_noise_var: Option<f64>,

    pub acquisition: AcquisitionKind,
    pub mc_samples: usize,
    pub eval_iterations: usize,
    pub eval_batch: usize,
    pub k_max: usize,
    pub eval_grid_size: usize,
    pub prior_grid_size: usize,
    pub include_standard_normal: bool,

    pub checkpoint_every: usize,
    pub progress_every: usize,
    pub checkpoint_out: PathBuf,
    pub checkpoint_in: Option<PathBuf>,
    pub results_out: PathBuf,
    pub verbosity: Verbosity,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reptile = ReptileConfig::default();
        let tasks = TaskClassConfig::default();
        let kernel = KernelParams::default();
        let bench = BenchConfig::default();
        let bo = BoRunConfig::default();
        Self {
            seed: 0,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            inner_step: reptile.inner_step,
            inner_batch: reptile.inner_batch,
            inner_iters: reptile.inner_iters,
            outer_step: reptile.outer_step,
            outer_iters: reptile.outer_iters,
            meta_batch: reptile.meta_batch,
            model_size: 64,
            hidden_layers: 2,
            sample_radius: tasks.boundary.radius(),
            std_min: tasks.std_min,
            std_max: tasks.std_max,
            noise_var: tasks.noise_var,
            kernel_amplitude: kernel.amplitude,
            kernel_length_scale: kernel.length_scales[0],
            kernel_noise_var: None,
            acquisition: bo.acquisition,
            mc_samples: bo.mc.sample_count,
            eval_iterations: bench.eval_iterations,
            eval_batch: bench.eval_batch,
            k_max: bench.k_max,
            eval_grid_size: bo.eval_grid_size,
            prior_grid_size: DEFAULT_GRID_SIZE,
            include_standard_normal: bench.include_standard_normal,
            checkpoint_every: 1000,
            progress_every: 100,
            checkpoint_out: PathBuf::from("metaprior.ckpt"),
            checkpoint_in: None,
            results_out: PathBuf::from("results"),
            verbosity: Verbosity::Normal,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key '{key}': cannot parse '{value}'")))
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_num(key, v)?,
            "workers" => self.workers = parse_num(key, v)?,
            "inner_step" => self.inner_step = parse_num(key, v)?,
            "inner_batch" => self.inner_batch = parse_num(key, v)?,
            "inner_iters" => self.inner_iters = parse_num(key, v)?,
            "outer_step" => self.outer_step = parse_num(key, v)?,
            "outer_iters" => self.outer_iters = parse_num(key, v)?,
            "meta_batch" => self.meta_batch = parse_num(key, v)?,
            "model_size" => self.model_size = parse_num(key, v)?,
            "hidden_layers" => self.hidden_layers = parse_num(key, v)?,
            "sample_radius" => self.sample_radius = parse_num(key, v)?,
            "std_min" => self.std_min = parse_num(key, v)?,
            "std_max" => self.std_max = parse_num(key, v)?,
            "noise_var" => self.noise_var = parse_num(key, v)?,
            "kernel_amplitude" => self.kernel_amplitude = parse_num(key, v)?,
            "kernel_length_scale" => self.kernel_length_scale = parse_num(key, v)?,
            "kernel_noise_var" => {
                self.kernel_noise_var = match v {
                    "" | "auto" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "acquisition" => self.acquisition = v.parse().map_err(|e| CliError::Usage(format!("{e}")))?,
            "mc_samples" => self.mc_samples = parse_num(key, v)?,
            "eval_iterations" => self.eval_iterations = parse_num(key, v)?,
            "eval_batch" => self.eval_batch = parse_num(key, v)?,
            "k_max" => self.k_max = parse_num(key, v)?,
            "eval_grid_size" => self.eval_grid_size = parse_num(key, v)?,
            "prior_grid_size" => self.prior_grid_size = parse_num(key, v)?,
            "include_standard_normal" => self.include_standard_normal = parse_num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "progress_every" => self.progress_every = parse_num(key, v)?,
            "checkpoint_out" => self.checkpoint_out = PathBuf::from(v),
            "checkpoint_in" => self.checkpoint_in = (!v.is_empty()).then(|| PathBuf::from(v)),
            "results_out" => self.results_out = PathBuf::from(v),
            "verbosity" => {
                self.verbosity = match v {
                    "quiet" => Verbosity::Quiet,
                    "normal" => Verbosity::Normal,
                    other => return Err(CliError::Usage(format!("verbosity must be quiet|normal, got '{other}'"))),
                }
            }
            other => return Err(CliError::Usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the file (if any), then the seed environment override.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config '{}': {e}", p.display())))?;
            cfg.apply_text(&text, &p.display().to_string())?;
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = parse_num(SEED_ENV, seed.trim())?;
        }
        Ok(cfg)
    }

    pub fn layout(&self) -> Result<Layout, CliError> {
        Layout::mlp(self.model_size, self.hidden_layers).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn reptile(&self) -> ReptileConfig {
        ReptileConfig {
            inner_step: self.inner_step,
            inner_batch: self.inner_batch,
            inner_iters: self.inner_iters,
            outer_step: self.outer_step,
            outer_iters: self.outer_iters,
            meta_batch: self.meta_batch,
            seed: self.seed,
        }
    }

    pub fn task_class(&self) -> Result<TaskClassConfig, CliError> {
        let cfg = TaskClassConfig {
            boundary: Boundary::new(self.sample_radius).map_err(|e| CliError::Usage(e.to_string()))?,
            std_min: self.std_min,
            std_max: self.std_max,
            noise_var: self.noise_var,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn bo_run(&self, shots: usize, prior_kind: PriorKind) -> BoRunConfig {
        BoRunConfig {
            shots,
            prior_kind,
            acquisition: self.acquisition,
            kernel: self.kernel(),
            mc: McConfig {
                sample_count: self.mc_samples,
                seed: 0,
            },
            eval_grid_size: self.eval_grid_size,
            prior_grid_size: self.prior_grid_size,
            seed: self.seed,
        }
    }

    pub fn kernel(&self) -> KernelParams {
        let matched = KernelParams::for_observation_noise(self.noise_var);
        KernelParams {
            amplitude: self.kernel_amplitude,
            length_scales: vec![self.kernel_length_scale],
            noise_var: self.kernel_noise_var.unwrap_or(matched.noise_var),
        }
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            eval_iterations: self.eval_iterations,
            eval_batch: self.eval_batch,
            k_max: self.k_max,
            include_standard_normal: self.include_standard_normal,
        }
    }

    /// Every resolved key, for provenance in result files.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.into());
        put("workers", self.workers.into());
        put("inner_step", self.inner_step.into());
        put("inner_batch", self.inner_batch.into());
        put("inner_iters", self.inner_iters.into());
        put("outer_step", self.outer_step.into());
        put("outer_iters", self.outer_iters.into());
        put("meta_batch", self.meta_batch.into());
        put("model_size", self.model_size.into());
        put("hidden_layers", self.hidden_layers.into());
        put("sample_radius", self.sample_radius.into());
        put("std_min", self.std_min.into());
        put("std_max", self.std_max.into());
        put("noise_var", self.noise_var.into());
        put("kernel_amplitude", self.kernel_amplitude.into());
        put("kernel_length_scale", self.kernel_length_scale.into());
        put(
            "kernel_noise_var",
            match self.kernel_noise_var {
                Some(v) => v.into(),
                None => "auto".into(),
            },
        );
        put("acquisition", self.acquisition.to_string().into());
        put("mc_samples", self.mc_samples.into());
        put("eval_iterations", self.eval_iterations.into());
        put("eval_batch", self.eval_batch.into());
        put("k_max", self.k_max.into());
        put("eval_grid_size", self.eval_grid_size.into());
        put("prior_grid_size", self.prior_grid_size.into());
        put("include_standard_normal", self.include_standard_normal.into());
        put("checkpoint_every", self.checkpoint_every.into());
        put("progress_every", self.progress_every.into());
        put("checkpoint_out", self.checkpoint_out.display().to_string().into());
        put(
            "checkpoint_in",
            self.checkpoint_in.as_ref().map(|p| p.display().to_string()).into(),
        );
        put("results_out", self.results_out.display().to_string().into());
        put(
            "verbosity",
            match self.verbosity {
                Verbosity::Quiet => "quiet",
                Verbosity::Normal => "normal",
            }
            .into(),
        );
        Value::Object(m)
    }
}
