//! Fully connected ReLU network with a linear output layer.
//!
//! Activations are stored row-major as `batch x width`; layer weights are
//! `fan_in x fan_out` so a layer is `Z = A W + b`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_in x fan_out`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    /// Parameters flattened layer by layer, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect()
    }
}

/// Forward pass intermediates kept for backpropagation.
pub struct Trace {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has an input")
    }
}

/// `C = alpha * op(A) * op(B) + beta * C` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// He-initialised weights (`N(0, 2 / fan_in)`), zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let dist = Normal::new(0.0, (2.0 / layer.fan_in as f64).sqrt())
                .map_err(|e| Error::Invariant(format!("init distribution: {e}")))?;
            for w in &mut layer.weights {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                fan_in: w[0],
                fan_out: w[1],
                weights: vec![0.0; w[0] * w[1]],
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let mut sizes = vec![layers[0].fan_in];
        for (i, l) in layers.iter().enumerate() {
            if l.fan_in != *sizes.last().expect("non-empty")
                || l.weights.len() != l.fan_in * l.fan_out
                || l.biases.len() != l.fan_out
            {
                return Err(Error::Data(format!("layer {i} has inconsistent shape")));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("layer {i} has non-finite parameters")));
            }
            sizes.push(l.fan_out);
        }
        Ok(Self { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened in the same order as [`Grads::flat`].
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .copied()
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Invariant("parameter vector has the wrong length".into()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Copy parameters from a network of identical shape.
    pub fn copy_from(&mut self, other: &Mlp) {
        assert_eq!(self.sizes, other.sizes, "shape mismatch");
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.biases.copy_from_slice(&src.biases);
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Invariant(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite network input".into()));
        }
        Ok(self.forward_batch(input, 1).acts.pop().expect("output"))
    }

    /// Batched forward pass over `batch` rows of `input`.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Trace {
        assert_eq!(input.len(), batch * self.input_dim(), "input shape");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(batch * l.fan_out);
            for _ in 0..batch {
                z.extend_from_slice(&l.biases);
            }
            let a = acts.last().expect("input pushed");
            gemm(
                batch,
                l.fan_in,
                l.fan_out,
                a,
                (l.fan_in, 1),
                &l.weights,
                (l.fan_out, 1),
                1.0,
                &mut z,
            );
            if i != last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        Trace { batch, acts }
    }

    /// Backpropagate `d_out` (gradient of the loss w.r.t. the outputs of
    /// `trace`) to parameter gradients.
    pub fn backward(&self, trace: &Trace, d_out: &[f64]) -> Grads {
        let batch = trace.batch;
        assert_eq!(d_out.len(), batch * self.output_dim(), "gradient shape");
        let n = self.layers.len();
        let mut gw = vec![Vec::new(); n];
        let mut gb = vec![Vec::new(); n];
        let mut dz = d_out.to_vec();
        for i in (0..n).rev() {
            let l = &self.layers[i];
            let a_prev = &trace.acts[i];
            let mut w = vec![0.0; l.fan_in * l.fan_out];
            // dW = A_prev^T dZ
            gemm(
                l.fan_in,
                batch,
                l.fan_out,
                a_prev,
                (1, l.fan_in),
                &dz,
                (l.fan_out, 1),
                0.0,
                &mut w,
            );
            let mut b = vec![0.0; l.fan_out];
            for row in dz.chunks_exact(l.fan_out) {
                b.iter_mut().zip(row).for_each(|(s, v)| *s += v);
            }
            gw[i] = w;
            gb[i] = b;
            if i > 0 {
                // dA_prev = dZ W^T, masked by the ReLU of the previous layer.
                let mut da = vec![0.0; batch * l.fan_in];
                gemm(
                    batch,
                    l.fan_out,
                    l.fan_in,
                    &dz,
                    (l.fan_out, 1),
                    &l.weights,
                    (1, l.fan_out),
                    0.0,
                    &mut da,
                );
                da.iter_mut().zip(a_prev).for_each(|(d, a)| {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = da;
            }
        }
        Grads {
            weights: gw,
            biases: gb,
        }
    }

    /// Mean squared error between the output at `actions[b]` and
    /// `targets[b]` for every row, and its parameter gradient.
    pub fn loss_and_grad(&self, input: &[f64], actions: &[usize], targets: &[f64]) -> (f64, Grads) {
        let batch = actions.len();
        assert_eq!(targets.len(), batch);
        let trace = self.forward_batch(input, batch);
        let out = self.output_dim();
        let q = trace.output();
        let mut d_out = vec![0.0; batch * out];
        let mut loss = 0.0;
        for (b, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            let err = q[b * out + a] - y;
            loss += err * err;
            d_out[b * out + a] = 2.0 * err / batch as f64;
        }
        (loss / batch as f64, self.backward(&trace, &d_out))
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}
