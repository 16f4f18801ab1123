//! The task class: Gaussian densities with random mean and width on a
//! symmetric boundary, observed with additive Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Minibatch;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// The closed interval `[-radius, radius]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    radius: f64,
}

impl Boundary {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("boundary radius must be positive, got {radius}")));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn lo(&self) -> f64 {
        -self.radius
    }

    pub fn hi(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, x: f64) -> bool {
        (-self.radius..=self.radius).contains(&x)
    }

    /// `n ≥ 2` evenly spaced points with both endpoints included.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2, "grid needs at least two points");
        let step = 2.0 * self.radius / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { self.radius } else { -self.radius + step * i as f64 })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(-self.radius..=self.radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTask {
    pub mean: f64,
    pub std: f64,
}

impl GaussianTask {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std.is_finite() && std > 0.0) {
            return Err(Error::Config(format!("invalid task mean {mean} / std {std}")));
        }
        Ok(Self { mean, std })
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        INV_SQRT_2PI / self.std * (-0.5 * z * z).exp()
    }
}

/// Free-function form of [`GaussianTask::density`].
pub fn task_density(task: &GaussianTask, x: f64) -> f64 {
    task.density(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskClassConfig {
    pub boundary: Boundary,
    pub std_min: f64,
    pub std_max: f64,
    /// Variance of the additive observation noise.
    pub noise_var: f64,
}

impl Default for TaskClassConfig {
    fn default() -> Self {
        Self {
            boundary: Boundary { radius: 4.0 },
            std_min: 0.5,
            std_max: 2.0,
            noise_var: 1e-4,
        }
    }
}

impl TaskClassConfig {
    pub fn validate(&self) -> Result<()> {
        Boundary::new(self.boundary.radius)?;
        if !(self.std_min > 0.0 && self.std_min <= self.std_max && self.std_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < std_min <= std_max, got [{}, {}]",
                self.std_min, self.std_max
            )));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::Config(format!("noise_var must be >= 0, got {}", self.noise_var)));
        }
        Ok(())
    }

    /// One noisy observation of `task` at `x`.
    pub fn observe<R: Rng + ?Sized>(&self, task: &GaussianTask, x: f64, rng: &mut R) -> f64 {
        let clean = task.density(x);
        if self.noise_var > 0.0 {
            let noise = Normal::new(0.0, self.noise_var.sqrt()).expect("finite noise std");
            clean + noise.sample(rng)
        } else {
            clean
        }
    }
}

pub fn sample_task<R: Rng + ?Sized>(cfg: &TaskClassConfig, rng: &mut R) -> GaussianTask {
    let mean = cfg.boundary.sample(rng);
    let std = if cfg.std_min == cfg.std_max {
        cfg.std_min
    } else {
        rng.random_range(cfg.std_min..=cfg.std_max)
    };
    GaussianTask { mean, std }
}

/// `size` inputs uniform on the boundary with noisy density targets.
pub fn sample_minibatch<R: Rng + ?Sized>(
    task: &GaussianTask,
    cfg: &TaskClassConfig,
    size: usize,
    rng: &mut R,
) -> Result<Minibatch> {
    if size == 0 {
        return Err(Error::Structure("minibatch size must be >= 1".into()));
    }
    let xs: Vec<f64> = (0..size).map(|_| cfg.boundary.sample(rng)).collect();
    let ys = xs.iter().map(|&x| cfg.observe(task, x, rng)).collect();
    Minibatch::new(xs, ys)
}
