//! PReLU multilayer perceptron classifier `d(x; phi)`.
//!
//! Hidden layers apply an affine map followed by a PReLU with one learnable
//! slope per layer. The output layer is a single logit passed through a
//! sigmoid and clamped to `[EPS, 1 - EPS]`.
//!
//! Gradients are computed by hand-written reverse passes over this fixed
//! architecture. Parameter gradients are flat vectors laid out as
//! `[W_0 (row-major), b_0, W_1, b_1, .., W_L, b_L, slope_0, .., slope_{L-1}]`,
//! the same layout as [`Discriminator::to_flat`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Output clamp applied before any logarithm.
pub const EPS: f64 = 1e-7;

/// Initial PReLU slope.
pub const INITIAL_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `[n_out x n_in]`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n_in..(i + 1) * self.n_in]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|i| dot(self.row(i), x) + self.b[i])
            .collect()
    }

    /// `W x`, without the bias.
    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out).map(|i| dot(self.row(i), x)).collect()
    }

    /// `W^T g`.
    fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_in];
        for (i, gi) in g.iter().enumerate() {
            if *gi != 0.0 {
                axpy(*gi, self.row(i), &mut out);
            }
        }
        out
    }

    fn num_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn prelu_gain(a: f64, slope: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Activations recorded during a forward pass.
struct Tape {
    /// Inputs to every layer: `h_0 = x`, then the hidden activations.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    logit: f64,
}

/// Sigmoid output and whether the clamp is active.
fn clamped_output(logit: f64) -> (f64, bool) {
    let s = sigmoid(logit);
    if s < EPS {
        (EPS, true)
    } else if s > 1.0 - EPS {
        (1.0 - EPS, true)
    } else {
        (s, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscriminatorCheckpoint", into = "DiscriminatorCheckpoint")]
pub struct Discriminator {
    layers: Vec<Dense>,
    slopes: Vec<f64>,
}

/// JSON checkpoint layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorCheckpoint {
    /// `[input_dim, hidden.., 1]`.
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<LayerCheckpoint>,
    pub prelu_slopes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    /// `[out][in]`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl From<Discriminator> for DiscriminatorCheckpoint {
    fn from(d: Discriminator) -> Self {
        Self {
            layer_sizes: d.layer_sizes(),
            layers: d
                .layers
                .iter()
                .map(|l| LayerCheckpoint {
                    weights: (0..l.n_out).map(|i| l.row(i).to_vec()).collect(),
                    bias: l.b.clone(),
                })
                .collect(),
            prelu_slopes: d.slopes,
        }
    }
}

impl TryFrom<DiscriminatorCheckpoint> for Discriminator {
    type Error = Error;

    fn try_from(c: DiscriminatorCheckpoint) -> Result<Self> {
        let layers = c
            .layers
            .into_iter()
            .map(|l| (l.weights, l.bias))
            .collect();
        let d = Discriminator::from_layers(layers, c.prelu_slopes)?;
        if d.layer_sizes() != c.layer_sizes {
            return Err(Error::contract("checkpoint header does not match layers"));
        }
        Ok(d)
    }
}

impl Discriminator {
    /// Glorot-uniform weights, zero biases, slopes at [`INITIAL_SLOPE`].
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut d = Self::zeros(input_dim, hidden)?;
        for layer in &mut d.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            for w in &mut layer.w {
                *w = rng.random_range(-limit..=limit);
            }
        }
        Ok(d)
    }

    /// Network with every weight and bias at zero; its output is 0.5
    /// everywhere.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::contract("layer sizes must be positive"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self {
            layers,
            slopes: vec![INITIAL_SLOPE; hidden.len()],
        })
    }

    /// Builds a network from explicit `([out][in] weights, bias)` pairs.
    pub fn from_layers(layers: Vec<(Vec<Vec<f64>>, Vec<f64>)>, slopes: Vec<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("discriminator needs at least one layer"));
        }
        check_dim("discriminator slopes", layers.len() - 1, slopes.len())?;
        let mut dense = Vec::with_capacity(layers.len());
        for (weights, bias) in layers {
            let n_out = weights.len();
            let n_in = weights.first().map_or(0, Vec::len);
            if n_out == 0 || n_in == 0 {
                return Err(Error::contract("empty weight matrix"));
            }
            check_dim("discriminator bias", n_out, bias.len())?;
            let mut w = Vec::with_capacity(n_in * n_out);
            for row in &weights {
                check_dim("discriminator weight row", n_in, row.len())?;
                w.extend_from_slice(row);
            }
            if let Some(prev) = dense.last() {
                let prev: &Dense = prev;
                check_dim("discriminator layer chaining", prev.n_out, n_in)?;
            }
            dense.push(Dense {
                n_in,
                n_out,
                w,
                b: bias,
            });
        }
        check_dim("discriminator output", 1, dense.last().unwrap().n_out)?;
        let d = Self {
            layers: dense,
            slopes,
        };
        if d.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("discriminator parameters"));
        }
        Ok(d)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum::<usize>() + self.slopes.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            flat.extend_from_slice(&l.w);
            flat.extend_from_slice(&l.b);
        }
        flat.extend_from_slice(&self.slopes);
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("discriminator flat parameters", self.num_params(), flat.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        self.slopes.copy_from_slice(&flat[off..]);
        Ok(())
    }

    /// Offsets of each layer's weight block and bias block in the flat
    /// layout, followed by the slope offset.
    fn offsets(&self) -> (Vec<(usize, usize)>, usize) {
        let mut off = 0;
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            out.push((off, off + l.w.len()));
            off += l.num_params();
        }
        (out, off)
    }

    fn run(&self, x: &[f64]) -> Result<Tape> {
        check_dim("discriminator input", self.input_dim(), x.len())?;
        let n_hidden = self.slopes.len();
        let mut inputs = Vec::with_capacity(n_hidden + 1);
        let mut pre = Vec::with_capacity(n_hidden);
        inputs.push(x.to_vec());
        for (layer, &slope) in self.layers.iter().zip(&self.slopes) {
            let a = layer.apply(inputs.last().unwrap());
            let h = a.iter().map(|&v| v * prelu_gain(v, slope)).collect();
            pre.push(a);
            inputs.push(h);
        }
        let last = self.layers.last().unwrap();
        let logit = dot(last.row(0), inputs.last().unwrap()) + last.b[0];
        Ok(Tape { inputs, pre, logit })
    }

    /// Pre-sigmoid output.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        Ok(self.run(x)?.logit)
    }

    /// Classifier output in `[EPS, 1 - EPS]`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(clamped_output(self.logit(x)?).0)
    }

    /// Accumulates `scale * grad_phi logit` into `grad`.
    fn backprop_logit(&self, tape: &Tape, scale: f64, grad: &mut [f64]) {
        let (offs, slope_off) = self.offsets();
        let n_hidden = self.slopes.len();
        let last = self.layers.last().unwrap();
        let (w_off, b_off) = offs[n_hidden];
        axpy(scale, &tape.inputs[n_hidden], &mut grad[w_off..b_off]);
        grad[b_off] += scale;
        let mut g: Vec<f64> = last.row(0).iter().map(|w| scale * w).collect();
        for l in (0..n_hidden).rev() {
            let layer = &self.layers[l];
            let a = &tape.pre[l];
            let slope = self.slopes[l];
            let mut slope_grad = 0.0;
            for (gi, &ai) in g.iter_mut().zip(a) {
                if ai <= 0.0 {
                    slope_grad += *gi * ai;
                }
                *gi *= prelu_gain(ai, slope);
            }
            grad[slope_off + l] += slope_grad;
            let (w_off, b_off) = offs[l];
            let h = &tape.inputs[l];
            for (i, &gi) in g.iter().enumerate() {
                if gi != 0.0 {
                    axpy(gi, h, &mut grad[w_off + i * layer.n_in..w_off + (i + 1) * layer.n_in]);
                }
                grad[b_off + i] += gi;
            }
            if l > 0 {
                g = layer.apply_transpose(&g);
            }
        }
    }

    /// Reverse linear chain from the output weights down to the input.
    /// Returns `t_0 .. t_L` and `q_0 .. q_{L-1}` with `t_L = w_L`,
    /// `q_l = m_l * t_{l+1}` and `t_l = W_l^T q_l`, so `t_0 = grad_x logit`.
    fn input_chain(&self, tape: &Tape) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n_hidden = self.slopes.len();
        let mut ts = vec![Vec::new(); n_hidden + 1];
        let mut qs = vec![Vec::new(); n_hidden];
        ts[n_hidden] = self.layers[n_hidden].row(0).to_vec();
        for l in (0..n_hidden).rev() {
            let slope = self.slopes[l];
            let q: Vec<f64> = ts[l + 1]
                .iter()
                .zip(&tape.pre[l])
                .map(|(t, &a)| t * prelu_gain(a, slope))
                .collect();
            ts[l] = self.layers[l].apply_transpose(&q);
            qs[l] = q;
        }
        (ts, qs)
    }

    /// Gradient of the (clamped) output with respect to the input.
    pub fn input_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let tape = self.run(x)?;
        let (s, clamped) = clamped_output(tape.logit);
        if clamped {
            return Ok(vec![0.0; x.len()]);
        }
        let ds = s * (1.0 - s);
        let (mut ts, _) = self.input_chain(&tape);
        let mut v = ts.swap_remove(0);
        v.iter_mut().for_each(|e| *e *= ds);
        Ok(v)
    }

    /// Mean binary cross-entropy over `(x, label)` pairs and its gradient.
    pub fn bce_loss_and_grad<X: AsRef<[f64]>>(&self, batch: &[(X, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::contract("binary cross-entropy needs a non-empty batch"));
        }
        let inv_n = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.num_params()];
        for (x, y) in batch {
            let y = *y;
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::contract(format!("label {y} outside [0, 1]")));
            }
            let tape = self.run(x.as_ref())?;
            let (d, clamped) = clamped_output(tape.logit);
            loss -= y * d.ln() + (1.0 - y) * (1.0 - d).ln();
            if !clamped {
                self.backprop_logit(&tape, (d - y) * inv_n, &mut grad);
            }
        }
        Ok((loss * inv_n, grad))
    }

    /// R1 penalty `mean ||grad_x d(x)||^2` over a batch of real data, with its
    /// exact parameter gradient. PReLU masks are held fixed (their second
    /// derivative vanishes away from kinks).
    pub fn r1_penalty_and_grad<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::contract("R1 penalty needs a non-empty batch"));
        }
        let inv_n = 1.0 / batch.len() as f64;
        let n_hidden = self.slopes.len();
        let (offs, slope_off) = self.offsets();
        let mut penalty = 0.0;
        let mut grad = vec![0.0; self.num_params()];
        for x in batch {
            let tape = self.run(x.as_ref())?;
            let (s, clamped) = clamped_output(tape.logit);
            if clamped {
                continue;
            }
            let s1 = s * (1.0 - s);
            let s2 = s1 * (1.0 - 2.0 * s);
            let (ts, qs) = self.input_chain(&tape);
            let q_norm: f64 = ts[0].iter().map(|v| v * v).sum();
            penalty += s1 * s1 * q_norm;

            // Through the sigmoid derivative: d(s1^2) = 2 s1 s2 dz.
            self.backprop_logit(&tape, 2.0 * s1 * s2 * q_norm * inv_n, &mut grad);

            // Through the weights of the linear input chain.
            let c = s1 * s1 * inv_n;
            let mut e: Vec<f64> = ts[0].iter().map(|v| 2.0 * v).collect();
            for l in 0..n_hidden {
                let layer = &self.layers[l];
                let (w_off, _) = offs[l];
                for (i, &qi) in qs[l].iter().enumerate() {
                    if qi != 0.0 {
                        axpy(
                            c * qi,
                            &e,
                            &mut grad[w_off + i * layer.n_in..w_off + (i + 1) * layer.n_in],
                        );
                    }
                }
                let f = layer.matvec(&e);
                let slope = self.slopes[l];
                let mut slope_grad = 0.0;
                e = Vec::with_capacity(f.len());
                for ((fi, ti), &ai) in f.iter().zip(&ts[l + 1]).zip(&tape.pre[l]) {
                    if ai <= 0.0 {
                        slope_grad += fi * ti;
                    }
                    e.push(fi * prelu_gain(ai, slope));
                }
                grad[slope_off + l] += c * slope_grad;
            }
            let (w_off, b_off) = offs[n_hidden];
            axpy(c, &e, &mut grad[w_off..b_off]);
        }
        Ok((penalty * inv_n, grad))
    }

    /// Smallest absolute hidden pre-activation at `x`; used to keep finite
    /// difference checks away from PReLU kinks.
    pub fn kink_margin(&self, x: &[f64]) -> Result<f64> {
        let tape = self.run(x)?;
        Ok(tape
            .pre
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, a| m.min(a.abs())))
    }
}
