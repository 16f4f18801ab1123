//! Reference implementations shared by the oracle tests and the acceptance run.

use metaprior::acquisition::{acquire_from_moments, AcquisitionKind};
use metaprior::gp::{fit, KernelParams, ObservationSet};
use metaprior::nn::{forward, init_weights, mse_loss_grad, Activation, Layout, LayerSpec, Minibatch, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Below this magnitude central differences are dominated by rounding
/// (about eps * loss / h ≈ 1e-12), so relative error is taken against it.
pub const GRAD_DENOM_FLOOR: f64 = 1e-6;

fn loss(w: &WeightVector, b: &Minibatch) -> f64 {
    let n = b.len() as f64;
    b.xs().iter().zip(b.ys()).map(|(&x, &y)| (forward(w, x).unwrap() - y).powi(2)).sum::<f64>() / n
}

fn random_layout(rng: &mut ChaCha8Rng) -> Layout {
    let hidden = rng.random_range(1..=3);
    let mut dims = vec![1];
    dims.extend((0..hidden).map(|_| rng.random_range(2..=16)));
    dims.push(1);
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, d)| {
            let act = if i + 2 == dims.len() { Activation::Identity } else { Activation::Tanh };
            LayerSpec::new(d[0], d[1], act)
        })
        .collect();
    Layout::new(layers).unwrap()
}

/// Worst relative error over all coordinates of one instance.
pub fn gradient_check(seed: u64, full_size: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = if full_size { Layout::mlp(64, 2).unwrap() } else { random_layout(&mut rng) };
    let mut w = init_weights(&layout, seed);
    for v in w.values_mut() {
        *v += rng.random_range(-0.2..0.2);
    }
    let n = rng.random_range(1..=8);
    let xs = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let ys = (0..n).map(|_| rng.random_range(0.0..0.8)).collect();
    let batch = Minibatch::new(xs, ys).unwrap();

    let (l, g) = mse_loss_grad(&w, &batch).unwrap();
    assert!((l - loss(&w, &batch)).abs() <= 1e-12 * l.max(1.0));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let orig = w.values()[i];
        w.values_mut()[i] = orig + h;
        let up = loss(&w, &batch);
        w.values_mut()[i] = orig - h;
        let down = loss(&w, &batch);
        w.values_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let a = g.values()[i];
        worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(GRAD_DENOM_FLOOR));
    }
    worst
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn dense_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot = m[c].clone();
                m[r].iter_mut().zip(&pivot).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn se(a: f64, b: f64, amp: f64, ell: f64) -> f64 {
    amp * (-(a - b).powi(2) / (2.0 * ell * ell)).exp()
}

/// Composite Simpson on [μ - 12σ, best_y] of (best_y - t) N(t; μ, σ²).
pub fn ei_quadrature(mu: f64, sigma: f64, best: f64) -> f64 {
    let lo = mu - 12.0 * sigma;
    if best <= lo {
        return 0.0;
    }
    let n = 20_000;
    let h = (best - lo) / n as f64;
    let f = |t: f64| {
        let z = (t - mu) / sigma;
        (best - t) * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut s = f(lo) + f(best);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Worst deviation of the factorized GP from the dense-inverse formulas over
/// `instances` random problems (n cycling through 1..=6, 50 queries each).
pub fn gp_worst_deviation(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let n = inst % 6 + 1;
        let amp = rng.random_range(0.5..2.0);
        let ell = rng.random_range(0.5..2.0);
        let noise = 10f64.powf(rng.random_range(-4.0..-1.0));
        let params = KernelParams {
            amplitude: amp,
            length_scales: vec![ell],
            noise_var: noise,
        };
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let post = fit(&ObservationSet::from_pairs(xs.clone(), ys.clone()).unwrap(), &params).unwrap();
        assert_eq!(post.jitter(), 0.0);

        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| se(xs[i], xs[j], amp, ell) + if i == j { noise } else { 0.0 }).collect())
            .collect();
        let inv = dense_inverse(&gram);
        for _ in 0..50 {
            let q = rng.random_range(-5.0..5.0);
            let k: Vec<f64> = xs.iter().map(|&x| se(q, x, amp, ell)).collect();
            let kinv: Vec<f64> = (0..n).map(|j| (0..n).map(|i| k[i] * inv[i][j]).sum()).collect();
            let mean: f64 = kinv.iter().zip(&ys).map(|(a, b)| a * b).sum();
            let var = (amp - kinv.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
            let (m, v) = post.predict(q);
            worst = worst.max((m - mean).abs()).max((v - var).abs());
        }
    }
    worst
}

/// Worst |closed-form EI - quadrature| over `cases` random (μ, σ, best_y).
pub fn ei_worst_deviation(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = 10f64.powf(rng.random_range(-2.0..0.5));
        let best = rng.random_range(-2.0..2.0);
        let closed = acquire_from_moments(mu, sigma * sigma, best, AcquisitionKind::ExpectedImprovement);
        worst = worst.max((closed - ei_quadrature(mu, sigma, best)).abs());
    }
    worst
}
