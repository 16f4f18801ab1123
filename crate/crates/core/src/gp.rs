//! Exact Gaussian-process regression with a squared-exponential kernel.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Signal variance (prior variance at every input).
    pub amplitude: f64,
    /// One length scale per input dimension; inputs here are scalar.
    pub length_scales: Vec<f64>,
    /// Added to the Gram diagonal.
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            length_scales: vec![1.0],
            noise_var: 1e-6,
        }
    }
}

impl KernelParams {
    /// Default kernel whose diagonal term covers observation noise of
    /// variance `obs_noise_var` plus the default 1e-6 jitter.
    pub fn for_observation_noise(obs_noise_var: f64) -> Self {
        let base = Self::default();
        Self {
            noise_var: base.noise_var + obs_noise_var,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Config(format!("kernel amplitude must be positive, got {}", self.amplitude)));
        }
        if self.length_scales.len() != 1 {
            return Err(Error::Config(format!(
                "scalar inputs need exactly one length scale, got {}",
                self.length_scales.len()
            )));
        }
        if self.length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Config("length scales must be positive".into()));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(Error::Config(format!("kernel noise_var must be >= 0, got {}", self.noise_var)));
        }
        Ok(())
    }

    fn length_scale(&self) -> f64 {
        self.length_scales[0]
    }
}

/// `amplitude * exp(-(a - b)² / (2 ℓ²))`.
#[inline]
pub fn kernel(a: f64, b: f64, p: &KernelParams) -> f64 {
    let d = (a - b) / p.length_scale();
    p.amplitude * (-0.5 * d * d).exp()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Structure(format!("{} inputs but {} outputs", xs.len(), ys.len())));
        }
        Ok(Self { xs, ys })
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.xs.push(x);
        self.ys.push(y);
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Smallest observed value (the incumbent under minimization).
    pub fn best_y(&self) -> Option<f64> {
        self.ys.iter().cloned().reduce(f64::min)
    }
}

/// Factorized posterior. `predict` is read-only and cheap for small data.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    params: KernelParams,
    xs: Vec<f64>,
    /// Row-major lower Cholesky factor of `K + (noise + jitter) I`.
    chol: Vec<f64>,
    /// `(K + σ²I)⁻¹ y`
    alpha: Vec<f64>,
    jitter: f64,
}

fn try_factor(gram: &DMatrix<f64>, diag: f64) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let mut m = gram.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += diag;
    }
    Cholesky::new(m)
}

pub fn fit(obs: &ObservationSet, params: &KernelParams) -> Result<GpPosterior> {
    params.validate()?;
    let n = obs.len();
    if n == 0 {
        return Ok(GpPosterior {
            params: params.clone(),
            xs: vec![],
            chol: vec![],
            alpha: vec![],
            jitter: 0.0,
        });
    }
    if let Some(v) = obs.xs.iter().chain(&obs.ys).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("observation value {v}")));
    }

    let gram = DMatrix::from_fn(n, n, |i, j| kernel(obs.xs[i], obs.xs[j], params));
    let mut jitter = 0.0;
    let mut factor = try_factor(&gram, params.noise_var);
    let mut next = JITTER_START * params.amplitude;
    while factor.is_none() && next <= JITTER_MAX * params.amplitude * (1.0 + 1e-9) {
        jitter = next;
        factor = try_factor(&gram, params.noise_var + jitter);
        next *= 10.0;
    }
    let factor = factor.ok_or(Error::IllConditioned {
        size: n,
        max_jitter: JITTER_MAX * params.amplitude,
    })?;

    let alpha = factor.solve(&DVector::from_column_slice(&obs.ys));
    let l = factor.l();
    let mut chol = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            chol[i * n + j] = l[(i, j)];
        }
    }
    Ok(GpPosterior {
        params: params.clone(),
        xs: obs.xs.clone(),
        chol,
        alpha: alpha.as_slice().to_vec(),
        jitter,
    })
}

impl GpPosterior {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn n_observations(&self) -> usize {
        self.xs.len()
    }

    /// Jitter that had to be added beyond `noise_var` (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and variance at `x`; variance clamped at zero.
    pub fn predict(&self, x: f64) -> (f64, f64) {
        let n = self.xs.len();
        let prior_var = self.params.amplitude;
        if n == 0 {
            return (0.0, prior_var);
        }
        let mut v: SmallVec<[f64; 32]> = self.xs.iter().map(|&xi| kernel(x, xi, &self.params)).collect();
        let mean: f64 = v.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        // forward substitution L v = k*
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&v[..i]).map(|(l, vj)| l * vj).sum();
            v[i] = (v[i] - s) / self.chol[i * n + i];
        }
        let reduction: f64 = v.iter().map(|t| t * t).sum();
        (mean, (prior_var - reduction).max(0.0))
    }
}

pub fn predict(post: &GpPosterior, x: f64) -> (f64, f64) {
    post.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let p = KernelParams::default();
        assert_eq!(kernel(1.3, 1.3, &p), 1.0);
        assert!((kernel(0.0, 1.0, &p) - 0.606_530_66).abs() < 1e-8);
        let q = KernelParams {
            amplitude: 2.5,
            length_scales: vec![0.7],
            noise_var: 0.0,
        };
        assert_eq!(kernel(0.2, 0.2, &q), 2.5);
        assert_eq!(kernel(-0.4, 1.1, &q), kernel(1.1, -0.4, &q));
    }

    #[test]
    fn empty_data_is_prior() {
        let p = KernelParams {
            amplitude: 1.7,
            ..Default::default()
        };
        let post = fit(&ObservationSet::new(), &p).unwrap();
        for x in [-3.0, 0.0, 2.0] {
            assert_eq!(post.predict(x), (0.0, 1.7));
        }
    }

    #[test]
    fn single_point_interpolates() {
        let p = KernelParams {
            noise_var: 0.0,
            ..Default::default()
        };
        let obs = ObservationSet::from_pairs(vec![0.7], vec![0.33]).unwrap();
        let post = fit(&obs, &p).unwrap();
        let (m, v) = post.predict(0.7);
        assert!((m - 0.33).abs() < 1e-8);
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let obs = ObservationSet::from_pairs(vec![-1.0, 0.0, 1.5], vec![0.2, -0.1, 0.4]).unwrap();
        let post = fit(&obs, &KernelParams::default()).unwrap();
        let (m, v) = post.predict(40.0);
        assert!(m.abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-6);
    }

    #[test]
    fn duplicates_need_jitter_or_noise() {
        let p = KernelParams {
            noise_var: 0.0,
            ..Default::default()
        };
        let obs = ObservationSet::from_pairs(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let post = fit(&obs, &p).unwrap();
        assert!(post.jitter() > 0.0);
        let (m, _) = post.predict(0.5);
        assert!((m - 1.0).abs() < 1e-6);
    }

    #[test]
    fn variance_bounded_by_noise_at_observations() {
        let p = KernelParams::default();
        let obs = ObservationSet::from_pairs(vec![-2.0, 0.1, 0.9, 3.0], vec![0.0, 0.2, 0.1, 0.0]).unwrap();
        let post = fit(&obs, &p).unwrap();
        for &x in obs.xs() {
            assert!(post.predict(x).1 <= p.noise_var + 1e-8);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let obs = ObservationSet::new();
        let p = KernelParams {
            length_scales: vec![],
            ..Default::default()
        };
        assert!(fit(&obs, &p).is_err());
        let p = KernelParams {
            amplitude: 0.0,
            ..Default::default()
        };
        assert!(fit(&obs, &p).is_err());
        assert!(ObservationSet::from_pairs(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn best_y_is_minimum() {
        let obs = ObservationSet::from_pairs(vec![0.0, 1.0, 2.0], vec![0.3, -0.2, 0.1]).unwrap();
        assert_eq!(obs.best_y(), Some(-0.2));
        assert_eq!(ObservationSet::new().best_y(), None);
    }
}
