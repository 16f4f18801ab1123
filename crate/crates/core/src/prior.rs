//! Sampling priors over the boundary: the meta-learned network output turned
//! into a density, plus uniform and standard-normal baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, WeightVector};
use crate::tasks::Boundary;

/// Values below this are lifted before normalization so no region of the
/// boundary ever gets zero weight.
pub const DENSITY_FLOOR: f64 = 1e-6;
pub const DEFAULT_GRID_SIZE: usize = 1024;
pub const MIN_NETWORK_GRID: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Meta,
    Uniform,
    StandardNormal,
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorKind::Meta => "meta",
            PriorKind::Uniform => "uniform",
            PriorKind::StandardNormal => "standard_normal",
        })
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meta" => Ok(PriorKind::Meta),
            "uniform" => Ok(PriorKind::Uniform),
            "standard_normal" | "standard-normal" | "normal" => Ok(PriorKind::StandardNormal),
            other => Err(Error::Config(format!("unknown prior kind '{other}'"))),
        }
    }
}

/// Piecewise-linear density on a uniform grid, normalized by the trapezoid rule.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorDensity {
    grid: Vec<f64>,
    density: Vec<f64>,
    kind: PriorKind,
    step: f64,
}

fn trapezoid(values: &[f64], step: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    step * (inner + 0.5 * (values[0] + values[n - 1]))
}

impl PriorDensity {
    /// Normalizes raw nonnegative-ish values sampled on `boundary.grid(len)`.
    /// Values below [`DENSITY_FLOOR`] are raised to it.
    pub fn from_values(boundary: &Boundary, values: &[f64], kind: PriorKind) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Structure("prior grid needs at least two points".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prior value {v}")));
        }
        if values.iter().all(|&v| v <= 0.0) {
            return Err(Error::DegeneratePrior(
                "all raw values are nonpositive; nothing to normalize".into(),
            ));
        }
        let grid = boundary.grid(values.len());
        let step = grid[1] - grid[0];
        let mut density: Vec<f64> = values.iter().map(|&v| v.max(DENSITY_FLOOR)).collect();
        let mass = trapezoid(&density, step);
        density.iter_mut().for_each(|d| *d /= mass);
        Ok(Self {
            grid,
            density,
            kind,
            step,
        })
    }

    pub fn from_network(theta: &WeightVector, boundary: &Boundary, grid_size: usize) -> Result<Self> {
        if grid_size < MIN_NETWORK_GRID {
            return Err(Error::Config(format!(
                "prior grid must have at least {MIN_NETWORK_GRID} points, got {grid_size}"
            )));
        }
        let raw = boundary
            .grid(grid_size)
            .into_iter()
            .map(|x| forward(theta, x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(boundary, &raw, PriorKind::Meta)
    }

    pub fn uniform(boundary: &Boundary, grid_size: usize) -> Result<Self> {
        let raw = vec![1.0; grid_size.max(2)];
        Self::from_values(boundary, &raw, PriorKind::Uniform)
    }

    /// N(0, 1) restricted to the boundary and renormalized there.
    pub fn standard_normal(boundary: &Boundary, grid_size: usize) -> Result<Self> {
        let raw: Vec<f64> = boundary
            .grid(grid_size.max(2))
            .into_iter()
            .map(|x| (-0.5 * x * x).exp())
            .collect();
        // far tails sit below the floor for wide boundaries; keep the shape exact
        let peak = raw.iter().cloned().fold(0.0, f64::max);
        let scaled: Vec<f64> = raw.iter().map(|v| v / peak).collect();
        Self::from_values(boundary, &scaled, PriorKind::StandardNormal)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.density, self.step)
    }

    /// Linear interpolation between grid points; zero outside the boundary.
    pub fn density_at(&self, x: f64) -> f64 {
        let lo = self.grid[0];
        let n = self.grid.len();
        if !(lo..=self.grid[n - 1]).contains(&x) {
            return 0.0;
        }
        let pos = (x - lo) / self.step;
        let i = (pos.floor() as usize).min(n - 2);
        let t = (pos - i as f64).clamp(0.0, 1.0);
        let (a, b) = (self.density[i], self.density[i + 1]);
        a + t * (b - a)
    }

    /// Grid location of the largest density (first one on ties).
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, &d) in self.density.iter().enumerate() {
            if d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    /// Number of strict local maxima along the grid, treating flat runs as one
    /// point.
    pub fn local_maxima(&self) -> usize {
        let mut runs: Vec<f64> = Vec::with_capacity(self.density.len());
        for &d in &self.density {
            if runs.last() != Some(&d) {
                runs.push(d);
            }
        }
        if runs.len() == 1 {
            return 1;
        }
        let n = runs.len();
        (0..n)
            .filter(|&i| {
                let left = i == 0 || runs[i] > runs[i - 1];
                let right = i == n - 1 || runs[i] > runs[i + 1];
                left && right
            })
            .count()
    }
}
