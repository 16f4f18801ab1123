use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use metaprior::bo::{evaluate_kshot, log_trend, run_bo};
use metaprior::checkpoint::Checkpoint;
use metaprior::prior::{PriorDensity, PriorKind};
use metaprior::reptile::{train, MetaState};
use metaprior::tasks::GaussianTask;
use serde_json::{json, Value};

use crate::config::{RunConfig, Verbosity};
use crate::{CliError, Common, EvalPriors, RunPrior};

pub struct BoRunArgs {
    pub task_mean: f64,
    pub task_std: f64,
    pub shots: usize,
    pub prior: RunPrior,
    pub out: PathBuf,
}

pub fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if cfg.workers == 0 {
        return Err(CliError::Usage("workers must be >= 1".into()));
    }
    Ok(cfg)
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Loads a checkpoint and checks it against the configured network shape.
fn load_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Checkpoint, CliError> {
    let ck = Checkpoint::load(path).map_err(|e| match e {
        metaprior::Error::Io(io) => CliError::Checkpoint(format!("cannot read checkpoint '{}': {io}", path.display())),
        other => CliError::Checkpoint(format!("{}: {other}", path.display())),
    })?;
    let expected = cfg.layout()?;
    if ck.layout() != &expected {
        return Err(CliError::Checkpoint(format!(
            "{}: layout mismatch: checkpoint has {} parameters in {} layers, config expects {} in {}",
            path.display(),
            ck.layout().param_count(),
            ck.layout().layers().len(),
            expected.param_count(),
            expected.layers().len()
        )));
    }
    Ok(ck)
}

fn required_checkpoint(cfg: &RunConfig) -> Result<Checkpoint, CliError> {
    let path = cfg
        .checkpoint_in
        .as_deref()
        .ok_or_else(|| CliError::Usage("a meta prior needs --checkpoint (or checkpoint_in)".into()))?;
    load_checkpoint(cfg, path)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = cfg.layout()?;
    let task_cfg = cfg.task_class()?;
    let reptile = cfg.reptile();
    reptile.validate()?;
    let total = reptile.outer_iters;
    let seed = cfg.seed;

    let state = pool(cfg)?.install(|| {
        train(&reptile, &task_cfg, &layout, |p| {
            let last = p.iteration == total;
            if cfg.verbosity == Verbosity::Normal
                && (last || (cfg.progress_every > 0 && p.iteration % cfg.progress_every == 0))
            {
                eprintln!(
                    "{}",
                    json!({"event": "progress", "iteration": p.iteration, "mean_inner_loss": p.mean_inner_loss})
                );
            }
            if !last && cfg.checkpoint_every > 0 && p.iteration % cfg.checkpoint_every == 0 {
                Checkpoint::from_state(p.state, seed).save(&cfg.checkpoint_out)?;
            }
            Ok(())
        })
    })?;

    Checkpoint::from_state(&state, seed)
        .save(&cfg.checkpoint_out)
        .map_err(|e| CliError::Other(format!("{}: {e}", cfg.checkpoint_out.display())))?;
    if cfg.verbosity == Verbosity::Normal {
        eprintln!(
            "{}",
            json!({"event": "done", "iterations": state.iteration, "checkpoint": cfg.checkpoint_out.display().to_string()})
        );
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, priors: EvalPriors) -> Result<(), CliError> {
    let task_cfg = cfg.task_class()?;
    let checkpoint = match priors {
        EvalPriors::Meta => Some(required_checkpoint(cfg)?),
        EvalPriors::UniformOnly => None,
    };
    let meta: Option<MetaState> = checkpoint.as_ref().map(|c| c.clone().into_state());
    let template = cfg.bo_run(1, PriorKind::Uniform);
    let bench = cfg.bench();

    let result = pool(cfg)?.install(|| evaluate_kshot(meta.as_ref(), &template, &task_cfg, &bench))?;

    let trend = |series: &[f64]| {
        let t = log_trend(series);
        json!({"slope": t.slope, "intercept": t.intercept, "pearson_r": t.pearson_r})
    };
    let report = json!({
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "checkpoint": checkpoint.as_ref().map(|c| json!({
            "path": cfg.checkpoint_in.as_ref().map(|p| p.display().to_string()),
            "outer_iters": c.outer_iters,
            "seed": c.seed,
        })),
        "kernel": template.kernel,
        "rows": result.rows,
        "log_trend": {
            "uniform": trend(&result.uniform_series()),
            "meta": result.meta_series().map(|s| trend(&s)),
        },
    });

    write_file(&with_suffix(&cfg.results_out, ".csv"), &result.to_csv())?;
    write_file(&with_suffix(&cfg.results_out, ".json"), &pretty(&report))?;
    Ok(())
}

pub fn cmd_emit_prior(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<(), CliError> {
    let task_cfg = cfg.task_class()?;
    let ck = load_checkpoint(cfg, checkpoint)?;
    let prior = PriorDensity::from_network(&ck.weights, &task_cfg.boundary, cfg.prior_grid_size)?;

    let mut csv = String::from("x,density\n");
    for (x, d) in prior.grid().iter().zip(prior.values()) {
        writeln!(csv, "{x},{d}").expect("write to string");
    }
    let meta = json!({
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "checkpoint": {"path": checkpoint.display().to_string(), "outer_iters": ck.outer_iters, "seed": ck.seed},
        "mode": prior.mode(),
        "integral": prior.integral(),
    });
    write_file(out, &csv)?;
    write_file(&out.with_extension("json"), &pretty(&meta))?;
    Ok(())
}

pub fn cmd_bo_run(cfg: &RunConfig, args: &BoRunArgs) -> Result<(), CliError> {
    let task_cfg = cfg.task_class()?;
    if !task_cfg.boundary.contains(args.task_mean) {
        return Err(CliError::Usage(format!(
            "task mean {} lies outside the boundary [-{r}, {r}]",
            args.task_mean,
            r = task_cfg.boundary.radius()
        )));
    }
    let task = GaussianTask::new(args.task_mean, args.task_std)?;
    let kind = match args.prior {
        RunPrior::Meta => PriorKind::Meta,
        RunPrior::Uniform => PriorKind::Uniform,
        RunPrior::StandardNormal => PriorKind::StandardNormal,
    };
    let prior = match kind {
        PriorKind::Meta => {
            let ck = required_checkpoint(cfg)?;
            PriorDensity::from_network(&ck.weights, &task_cfg.boundary, cfg.prior_grid_size)?
        }
        PriorKind::Uniform => PriorDensity::uniform(&task_cfg.boundary, cfg.prior_grid_size)?,
        PriorKind::StandardNormal => PriorDensity::standard_normal(&task_cfg.boundary, cfg.prior_grid_size)?,
    };
    let bo_cfg = cfg.bo_run(args.shots, kind);
    let trace = pool(cfg)?.install(|| run_bo(&task, &prior, &task_cfg, &bo_cfg))?;

    let mut steps = String::from("step,x,y,acquisition_score\n");
    for (i, s) in trace.steps.iter().enumerate() {
        writeln!(steps, "{},{},{},{}", i + 1, s.x, s.y, s.acquisition_score).expect("write to string");
    }
    let mut post = String::from("x,mean,var,truth,prior_density\n");
    for x in task_cfg.boundary.grid(cfg.eval_grid_size) {
        let (m, v) = trace.posterior.predict(x);
        writeln!(post, "{x},{m},{v},{},{}", task.density(x), prior.density_at(x)).expect("write to string");
    }
    let meta = json!({
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "task": {"mean": task.mean, "std": task.std},
        "prior": kind.to_string(),
        "shots": args.shots,
        "final_mse": trace.final_mse,
        "mse_per_step": trace.mse_per_step,
        "fallback_steps": trace.steps.iter().enumerate().filter(|(_, s)| s.fallback).map(|(i, _)| i + 1).collect::<Vec<_>>(),
    });
    write_file(&with_suffix(&args.out, "_trace.csv"), &steps)?;
    write_file(&with_suffix(&args.out, "_posterior.csv"), &post)?;
    write_file(&with_suffix(&args.out, ".json"), &pretty(&meta))?;
    Ok(())
}
