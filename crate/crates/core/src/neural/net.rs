use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in self.weights.chunks_exact(self.inputs).zip(&self.biases).enumerate() {
            out[o] = b + dot(row, x);
        }
    }
}

/// Dot product with four independent partial sums so it vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Feed-forward net: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Per-layer parameter gradients, same layout as [`DenseNet::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!("layer sizes must be >= 2 positive entries, got {sizes:?}")));
    }
    Ok(())
}

impl DenseNet {
    /// All-zero net with the given layer sizes `[input, hidden.., output]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// He initialisation: weights ~ N(0, 2 / fan_in), zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let normal = Normal::new(0.0, (2.0 / layer.inputs as f64).sqrt()).expect("positive std");
            layer.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: x.len() });
        }
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.apply(&cur, &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = out;
        }
        Ok(cur)
    }

    /// Activations of every layer for one input; entry 0 is the input.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.outputs];
            layer.apply(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    /// Loss of the chosen-action regression and its gradient:
    /// `mean_j (target_j - Q(x_j)[a_j])^2 + l2 * sum(W^2)`.
    /// Only the chosen output of each sample receives gradient; biases are
    /// not regularised.
    pub fn td_loss_and_grad(
        &self,
        inputs: &[Vec<f64>],
        actions: &[usize],
        targets: &[f64],
        l2: f64,
    ) -> Result<(f64, Gradients)> {
        let batch = inputs.len();
        if batch == 0 || actions.len() != batch || targets.len() != batch {
            return Err(Error::Shape { expected: batch.max(1), got: actions.len().min(targets.len()) });
        }
        let out_dim = self.output_dim();
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let scale = 2.0 / batch as f64;
        let last = self.layers.len() - 1;

        for ((x, &a), &y) in inputs.iter().zip(actions).zip(targets) {
            if x.len() != self.input_dim() {
                return Err(Error::Shape { expected: self.input_dim(), got: x.len() });
            }
            if a >= out_dim {
                return Err(Error::Shape { expected: out_dim, got: a + 1 });
            }
            let acts = self.activations(x);
            let err = acts[last + 1][a] - y;
            loss += err * err;

            let mut delta = vec![0.0; out_dim];
            delta[a] = scale * err;
            for li in (0..=last).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let gw = &mut grads.weights[li];
                let gb = &mut grads.biases[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, v)| *g += d * v);
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                    // Rectifier derivative of the previous layer's output.
                    prev.iter_mut().zip(input).for_each(|(p, &h)| {
                        if h <= 0.0 {
                            *p = 0.0;
                        }
                    });
                    delta = prev;
                }
            }
        }
        loss /= batch as f64;

        if l2 > 0.0 {
            for (layer, gw) in self.layers.iter().zip(&mut grads.weights) {
                for (g, w) in gw.iter_mut().zip(&layer.weights) {
                    loss += l2 * w * w;
                    *g += 2.0 * l2 * w;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Copies every parameter from `other`, which must have the same shape.
    pub fn copy_from(&mut self, other: &DenseNet) {
        debug_assert_eq!(self.sizes(), other.sizes());
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.biases.copy_from_slice(&src.biases);
        }
    }

    /// All parameters flattened (weights then biases, layer by layer).
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape { expected: self.num_params(), got: flat.len() });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }
}

impl Gradients {
    /// Flattened in the same order as [`DenseNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut net = DenseNet::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            net.layers[0].weights[i * 3 + i] = 1.0;
        }
        let x = [0.5, -1.5, 2.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn shape_mismatch() {
        let net = DenseNet::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 3, got: 1 })));
        assert!(DenseNet::zeros(&[3]).is_err());
        assert!(DenseNet::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = DenseNet::init(&[5, 8, 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = DenseNet::init(&[5, 8, 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = DenseNet::init(&[5, 8, 3], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn init_variance_matches_fan_in() {
        let fan_in = 100;
        let net = DenseNet::init(&[fan_in, 1000], &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let w = &net.layers[0].weights;
        assert_eq!(w.len(), 100_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / fan_in as f64;
        assert!((var - expected).abs() / expected < 0.1, "{var} vs {expected}");
    }

    #[test]
    fn params_round_trip() {
        let mut net = DenseNet::init(&[2, 3, 2], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let p = net.params();
        assert_eq!(p.len(), net.num_params());
        let mut zeroed = DenseNet::zeros(&[2, 3, 2]).unwrap();
        zeroed.set_params(&p).unwrap();
        assert_eq!(zeroed, net);
        assert!(net.set_params(&p[1..]).is_err());
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let net = DenseNet::init(&[3, 6, 4], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let x = vec![0.3, -0.7, 1.1];
        let q = net.forward(&x).unwrap();
        let (loss, g) = net.td_loss_and_grad(&[x], &[2], &[q[2]], 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }
}
