//! Minimal dense scalar-to-scalar network with analytic gradients.
//!
//! Parameters live in one flat [`WeightVector`], layer-major: for each layer
//! the `output_dim × input_dim` weight matrix (row-major, one row per output
//! unit) followed by its `output_dim` biases.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            output_dim,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_dim * self.output_dim + self.output_dim
    }
}

/// A validated chain of layers mapping one scalar to one scalar.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    layers: Vec<LayerSpec>,
}

impl Layout {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let (first, last) = match (layers.first(), layers.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Layout("no layers".into())),
        };
        for (i, l) in layers.iter().enumerate() {
            if l.input_dim == 0 || l.output_dim == 0 {
                return Err(Error::Layout(format!(
                    "layer {i} has zero dimension ({}→{})",
                    l.input_dim, l.output_dim
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::Layout(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output_dim,
                    i + 1,
                    pair[1].input_dim
                )));
            }
        }
        if first.input_dim != 1 || last.output_dim != 1 {
            return Err(Error::Layout(format!(
                "network must map 1 input to 1 output, got {}→{}",
                first.input_dim, last.output_dim
            )));
        }
        if last.activation != Activation::Identity {
            return Err(Error::Layout("final layer must use identity activation".into()));
        }
        Ok(Self { layers })
    }

    /// Fully connected `1 → width → … → width → 1` with tanh hidden layers.
    pub fn mlp(width: usize, hidden_layers: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut prev = 1;
        for _ in 0..hidden_layers {
            layers.push(LayerSpec::new(prev, width, Activation::Tanh));
            prev = width;
        }
        layers.push(LayerSpec::new(prev, 1, Activation::Identity));
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Weight-only count, excluding biases.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.input_dim * l.output_dim).sum()
    }

    fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.output_dim).max().unwrap_or(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
    layout: Layout,
}

impl WeightVector {
    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::Structure(format!(
                "layout needs {} values, got {}",
                layout.param_count(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight {i} is {}", values[i])));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.param_count()];
        Self { values, layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Paired regression samples for one SGD step.
#[derive(Clone, Debug, PartialEq)]
pub struct Minibatch {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Minibatch {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Structure(format!(
                "minibatch has {} inputs but {} targets",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::Structure("empty minibatch".into()));
        }
        Ok(Self { xs, ys })
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
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights(layout: &Layout, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(layout.param_count());
    for l in layout.layers() {
        let limit = (6.0 / (l.input_dim + l.output_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        values.extend((0..l.input_dim * l.output_dim).map(|_| dist.sample(&mut rng)));
        values.extend(std::iter::repeat_n(0.0, l.output_dim));
    }
    WeightVector {
        values,
        layout: layout.clone(),
    }
}

/// Runs the network on `x`, writing each layer's post-activation output into
/// `acts` (one slot of `max_width` per layer).
fn forward_into(w: &WeightVector, x: f64, acts: &mut [f64], width: usize) -> f64 {
    let mut offset = 0;
    let layers = w.layout.layers();
    for (li, l) in layers.iter().enumerate() {
        let (n_in, n_out) = (l.input_dim, l.output_dim);
        let weights = &w.values[offset..offset + n_in * n_out];
        let biases = &w.values[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += l.param_count();

        let (before, rest) = acts.split_at_mut(li * width);
        let out = &mut rest[..n_out];
        if li == 0 {
            for o in 0..n_out {
                out[o] = l.activation.apply(weights[o] * x + biases[o]);
            }
        } else {
            let input = &before[(li - 1) * width..(li - 1) * width + n_in];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + biases[o];
                out[o] = l.activation.apply(z);
            }
        }
    }
    acts[(layers.len() - 1) * width]
}

pub fn forward(w: &WeightVector, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("network input {x}")));
    }
    let width = w.layout.max_width();
    let mut acts = vec![0.0; width * w.layout.layers().len()];
    Ok(forward_into(w, x, &mut acts, width))
}

/// Mean squared error over the batch and its exact gradient.
pub fn mse_loss_grad(w: &WeightVector, batch: &Minibatch) -> Result<(f64, WeightVector)> {
    if batch.is_empty() {
        return Err(Error::Structure("empty minibatch".into()));
    }
    let layers = w.layout.layers();
    let width = w.layout.max_width();
    let n_layers = layers.len();
    let offsets: Vec<usize> = layers
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.param_count();
            Some(o)
        })
        .collect();

    let mut grad = vec![0.0; w.values.len()];
    let mut acts = vec![0.0; width * n_layers];
    let mut delta = vec![0.0; width];
    let mut delta_prev = vec![0.0; width];
    let scale = 2.0 / batch.len() as f64;
    let mut loss = 0.0;

    for (&x, &y) in batch.xs.iter().zip(&batch.ys) {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::NonFinite(format!("batch sample ({x}, {y})")));
        }
        let out = forward_into(w, x, &mut acts, width);
        let err = out - y;
        loss += err * err;
        // final layer is identity
        delta[0] = scale * err;

        for li in (0..n_layers).rev() {
            let l = &layers[li];
            let (n_in, n_out) = (l.input_dim, l.output_dim);
            let off = offsets[li];
            let g_w = off;
            let g_b = off + n_in * n_out;
            for o in 0..n_out {
                grad[g_b + o] += delta[o];
            }
            if li == 0 {
                for o in 0..n_out {
                    grad[g_w + o] += delta[o] * x;
                }
                break;
            }
            let input = &acts[(li - 1) * width..(li - 1) * width + n_in];
            let weights = &w.values[off..off + n_in * n_out];
            delta_prev[..n_in].iter_mut().for_each(|d| *d = 0.0);
            for o in 0..n_out {
                let d = delta[o];
                let row = &weights[o * n_in..(o + 1) * n_in];
                let g_row = &mut grad[g_w + o * n_in..g_w + (o + 1) * n_in];
                for i in 0..n_in {
                    g_row[i] += d * input[i];
                    delta_prev[i] += row[i] * d;
                }
            }
            let prev_act = layers[li - 1].activation;
            for i in 0..n_in {
                delta[i] = delta_prev[i] * prev_act.derivative_from_output(input[i]);
            }
        }
    }

    let loss = loss / batch.len() as f64;
    Ok((
        loss,
        WeightVector {
            values: grad,
            layout: w.layout.clone(),
        },
    ))
}

/// Plain SGD over `batches` in order. Returns the updated copy and the loss
/// of the last batch seen (before its update).
pub(crate) fn sgd_steps_with_loss(
    w: &WeightVector,
    batches: impl IntoIterator<Item = Minibatch>,
    step_size: f64,
) -> Result<(WeightVector, Option<f64>)> {
    let mut cur = w.clone();
    let mut last = None;
    for (step, batch) in batches.into_iter().enumerate() {
        let (loss, grad) = mse_loss_grad(&cur, &batch)?;
        for (v, g) in cur.values.iter_mut().zip(&grad.values) {
            *v -= step_size * g;
        }
        if !cur.is_finite() {
            return Err(Error::Divergence {
                iteration: step,
                detail: "non-finite weights after SGD step".into(),
            });
        }
        last = Some(loss);
    }
    Ok((cur, last))
}

pub fn sgd_steps(w: &WeightVector, batches: &[Minibatch], step_size: f64) -> Result<WeightVector> {
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {step_size}")));
    }
    sgd_steps_with_loss(w, batches.iter().cloned(), step_size).map(|(w, _)| w)
}
