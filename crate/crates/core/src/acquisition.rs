//! Improvement-based acquisition and the Monte-Carlo, prior-weighted argmax
//! used to pick the next sample.
//!
//! The objective is minimized: improvement means falling below the smallest
//! value observed so far.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::prior::PriorDensity;
use crate::tasks::Boundary;

/// Below this predictive standard deviation a point is treated as known.
pub const SIGMA_FLOOR: f64 = 1e-9;
/// Stand-in for ±∞ in the improvement score when σ is below the floor.
pub const LARGE: f64 = 1e12;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    ProbabilityOfImprovement,
    ExpectedImprovement,
}

impl std::fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AcquisitionKind::ProbabilityOfImprovement => "pi",
            AcquisitionKind::ExpectedImprovement => "ei",
        })
    }
}

impl std::str::FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pi" | "probability_of_improvement" => Ok(AcquisitionKind::ProbabilityOfImprovement),
            "ei" | "expected_improvement" => Ok(AcquisitionKind::ExpectedImprovement),
            other => Err(Error::Config(format!("unknown acquisition '{other}' (expected pi|ei)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            sample_count: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// Φ(z) through the complementary error function (libm's `erfc`, accurate to
/// a few ulp across the real line).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// γ = (best_y − μ) / σ from raw moments.
pub fn improvement_from_moments(mean: f64, var: f64, best_y: f64) -> f64 {
    let sigma = var.max(0.0).sqrt();
    if sigma < SIGMA_FLOOR {
        if best_y - mean > 0.0 {
            LARGE
        } else {
            -LARGE
        }
    } else {
        (best_y - mean) / sigma
    }
}

pub fn improvement_score(x: f64, post: &GpPosterior, best_y: f64) -> f64 {
    let (mean, var) = post.predict(x);
    improvement_from_moments(mean, var, best_y)
}

/// Acquisition value from the predictive moments at one point.
pub fn acquire_from_moments(mean: f64, var: f64, best_y: f64, kind: AcquisitionKind) -> f64 {
    let gamma = improvement_from_moments(mean, var, best_y);
    match kind {
        AcquisitionKind::ProbabilityOfImprovement => std_normal_cdf(gamma),
        AcquisitionKind::ExpectedImprovement => {
            let sigma = var.max(0.0).sqrt();
            if sigma < SIGMA_FLOOR {
                return 0.0;
            }
            (sigma * (gamma * std_normal_cdf(gamma) + std_normal_pdf(gamma))).max(0.0)
        }
    }
}

pub fn acquire(x: f64, post: &GpPosterior, best_y: f64, kind: AcquisitionKind) -> f64 {
    let (mean, var) = post.predict(x);
    acquire_from_moments(mean, var, best_y, kind)
}

/// Positive weighting of candidate locations.
pub trait CandidateWeight: Sync {
    fn weight(&self, x: f64) -> f64;
    /// Where to go when every candidate scores zero.
    fn mode(&self) -> f64;
}

impl CandidateWeight for PriorDensity {
    fn weight(&self, x: f64) -> f64 {
        self.density_at(x)
    }

    fn mode(&self) -> f64 {
        PriorDensity::mode(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub x: f64,
    pub score: f64,
    /// Set when all candidates scored zero and the weighting's mode was used.
    pub fallback: bool,
}

#[derive(Clone, Copy)]
struct Scored {
    score: f64,
    x: f64,
    index: usize,
}

/// Higher score wins; ties go to the smaller x, then the lower index. This is
/// a total order so the parallel reduction is independent of chunking.
fn better(a: Scored, b: Scored) -> Scored {
    use std::cmp::Ordering::*;
    match a.score.partial_cmp(&b.score).unwrap_or(Equal) {
        Greater => a,
        Less => b,
        Equal => {
            if (a.x, a.index) <= (b.x, b.index) {
                a
            } else {
                b
            }
        }
    }
}

/// Argmax of `weight(x) · acquire(x)` over the given candidates.
pub fn argmax_over<W: CandidateWeight + ?Sized>(
    candidates: &[f64],
    post: &GpPosterior,
    best_y: f64,
    kind: AcquisitionKind,
    weight: &W,
) -> Selection {
    let best = candidates
        .par_iter()
        .enumerate()
        .map(|(index, &x)| {
            let s = acquire(x, post, best_y, kind) * weight.weight(x);
            Scored {
                score: if s.is_nan() { 0.0 } else { s },
                x,
                index,
            }
        })
        .reduce_with(better);
    match best {
        Some(b) if b.score > 0.0 => Selection {
            x: b.x,
            score: b.score,
            fallback: false,
        },
        _ => Selection {
            x: weight.mode(),
            score: 0.0,
            fallback: true,
        },
    }
}

/// Draws `mc.sample_count` candidates uniformly on the boundary from `rng`
/// and returns the best prior-weighted acquisition among them.
pub fn mc_acquire_argmax<W: CandidateWeight + ?Sized, R: Rng + ?Sized>(
    post: &GpPosterior,
    best_y: f64,
    kind: AcquisitionKind,
    prior: &W,
    boundary: &Boundary,
    mc: &McConfig,
    rng: &mut R,
) -> Result<Selection> {
    if mc.sample_count == 0 {
        return Err(Error::Config("Monte Carlo sample count must be >= 1".into()));
    }
    let candidates: Vec<f64> = (0..mc.sample_count).map(|_| boundary.sample(rng)).collect();
    Ok(argmax_over(&candidates, post, best_y, kind, prior))
}
