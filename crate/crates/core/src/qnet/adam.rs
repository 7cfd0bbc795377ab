use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    params: AdamParams,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: AdamParams, n_params: usize) -> Self {
        Self {
            params,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Start a new optimisation step; call once before the `apply` calls of
    /// that step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Update `params` in place using moment slots `offset..offset + len`.
    pub fn apply(&mut self, offset: usize, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert!(self.t > 0, "begin_step must precede apply");
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.params;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let m = &mut self.m[offset..offset + params.len()];
        let v = &mut self.v[offset..offset + params.len()];
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            // Moments of dead units decay geometrically; subnormals are slow.
            if m[i].abs() < f64::MIN_POSITIVE {
                m[i] = 0.0;
            }
            if v[i] < f64::MIN_POSITIVE {
                v[i] = 0.0;
            }
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// One Adam step over every layer of `net`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.begin_step();
        let mut offset = 0;
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            self.apply(offset, &mut layer.weights, &grads.weights[i]);
            offset += layer.weights.len();
            self.apply(offset, &mut layer.biases, &grads.biases[i]);
            offset += layer.biases.len();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(w: &[f64]) -> f64 {
        w.iter().map(|x| x * x).sum()
    }

    #[test]
    fn one_step_decreases_quadratic() {
        let mut w = vec![0.3, -1.2, 2.0, 0.0001];
        let before = sq(&w);
        let g: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        let mut adam = Adam::new(AdamParams::with_learning_rate(1e-3), w.len());
        adam.begin_step();
        adam.apply(0, &mut w, &g);
        assert!(sq(&w) < before);
    }

    #[test]
    fn first_step_moves_each_weight_by_learning_rate() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut w = vec![1.0, -4.0];
        let mut adam = Adam::new(AdamParams::with_learning_rate(0.01), 2);
        adam.begin_step();
        adam.apply(0, &mut w, &[2.0, -8.0]);
        assert!((w[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert!((w[1] - (-4.0 + 0.01)).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut w = vec![1.0, -2.0, 3.0];
        let mut adam = Adam::new(AdamParams::with_learning_rate(0.05), 3);
        for _ in 0..2000 {
            let g: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
            adam.begin_step();
            adam.apply(0, &mut w, &g);
        }
        assert!(sq(&w) < 1e-4, "{w:?}");
    }
}
