//! Dense feed-forward networks: ReLU hidden layers, identity output layer.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// One affine layer: `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: Matrix::zeros(outputs, inputs), bias: vec![0.0; outputs] }
    }
}

/// Parameter-shaped bundle, used for the network itself, its gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Dense>,
}

impl Params {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.weights.cols()).collect();
        if let Some(last) = self.layers.last() {
            s.push(last.weights.rows());
        }
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// Every parameter in checkpoint order: per layer, weights row-major then bias.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.num_params(), "flat parameter length mismatch");
        for (p, &v) in self.iter_mut().zip(values) {
            *p = v;
        }
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.iter_mut() {
            *a *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    version: u64,
    /// Input of every layer.
    inputs: Vec<Matrix>,
    /// Pre-activation of every hidden layer (needed for the ReLU mask).
    pre: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct Mlp {
    params: Params,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params
    }
}

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization of weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "need at least input and output sizes");
        let mut params = Params::zeros(sizes);
        for layer in &mut params.layers {
            let bound = 1.0 / (layer.weights.cols() as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = rng.random_range(-bound..bound);
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-bound..bound);
            }
        }
        Self { params, version: fresh_version() }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self::from_params(Params::zeros(sizes))
    }

    pub fn from_params(params: Params) -> Self {
        Self { params, version: fresh_version() }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut Params {
        self.version = fresh_version();
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.params.sizes()
    }

    pub fn input_size(&self) -> usize {
        self.params.layers[0].weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.params.layers.last().expect("non-empty network").weights.rows()
    }

    /// Column-wise `rho(W x + psi)` through every layer.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Cache)> {
        if x.rows() != self.input_size() {
            return Err(Error::Shape(format!("input has {} rows, network expects {}", x.rows(), self.input_size())));
        }
        let last = self.params.layers.len() - 1;
        let mut inputs = Vec::with_capacity(last + 1);
        let mut pre = Vec::with_capacity(last);
        let mut h = x.clone();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let mut z = layer.weights.matmul(&h);
            for (i, &b) in layer.bias.iter().enumerate() {
                for v in z.row_mut(i) {
                    *v += b;
                }
            }
            inputs.push(h);
            if l < last {
                let mut a = z.clone();
                for v in a.as_mut_slice() {
                    *v = v.max(0.0);
                }
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok((h, Cache { version: self.version, inputs, pre }))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Analytic gradients of `sum(grad_out .* output)` with respect to every
    /// parameter and to the network input.
    pub fn backward(&self, cache: &Cache, grad_out: &Matrix) -> Result<(Params, Matrix)> {
        if cache.version != self.version {
            return Err(Error::StaleCache { cache: cache.version, network: self.version });
        }
        let last = self.params.layers.len() - 1;
        let batch = cache.inputs[0].cols();
        if grad_out.rows() != self.output_size() || grad_out.cols() != batch {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, expected {}x{batch}",
                grad_out.rows(),
                grad_out.cols(),
                self.output_size()
            )));
        }
        let mut grads = Params::zeros(&self.sizes());
        let mut delta = grad_out.clone();
        for l in (0..=last).rev() {
            let layer = &self.params.layers[l];
            grads.layers[l].weights = Matrix::matmul_transpose(&delta, &cache.inputs[l]);
            for (i, g) in grads.layers[l].bias.iter_mut().enumerate() {
                *g = delta.row(i).iter().sum();
            }
            let mut back = layer.weights.transpose_matmul(&delta);
            if l > 0 {
                let z = &cache.pre[l - 1];
                for (d, &zv) in back.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = back;
        }
        Ok((grads, delta))
    }

    /// `self <- rate * source + (1 - rate) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, rate: f64) -> Result<()> {
        if self.sizes() != source.sizes() {
            return Err(Error::Shape("soft update between networks of different shapes".into()));
        }
        for (t, &s) in self.params_mut().iter_mut().zip(source.params.iter()) {
            *t = rate * s + (1.0 - rate) * *t;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = SeedTree::new(seed).stream("input", &[]);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]);
        let y = net.predict(&random_input(3, 4, 1)).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer() {
        let mut p = Params::zeros(&[3, 3]);
        for i in 0..3 {
            p.layers[0].weights.set(i, i, 1.0);
        }
        let net = Mlp::from_params(p);
        let x = random_input(3, 6, 2);
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn batched_forward_is_bit_identical_to_per_column() {
        let mut rng = SeedTree::new(3).stream("init", &[]);
        let net = Mlp::new(&[4, 16, 8, 3], &mut rng);
        let x = random_input(4, 9, 4);
        let batched = net.predict(&x).unwrap();
        for j in 0..9 {
            let single = net.predict(&Matrix::from_columns(&[x.column(j)])).unwrap();
            assert_eq!(single.column(0), batched.column(j));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(matches!(net.forward(&Matrix::zeros(4, 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = SeedTree::new(11).stream("init", &[]);
        let mut net = Mlp::new(&[2, 16, 8, 1], &mut rng);
        let x = random_input(2, 5, 12);
        let g = random_input(1, 5, 13);
        let loss = |net: &Mlp| -> f64 {
            let y = net.predict(&x).unwrap();
            y.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, gx) = net.backward(&cache, &g).unwrap();
        let analytic = grads.to_flat();
        let base = net.params().to_flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut up = base.clone();
            up[i] += h;
            net.params_mut().set_flat(&up);
            let fu = loss(&net);
            up[i] -= 2.0 * h;
            net.params_mut().set_flat(&up);
            let fd = (fu - loss(&net)) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!((fd - analytic[i]).abs() / denom < 1e-4, "param {i}: fd {fd} vs {}", analytic[i]);
        }
        net.params_mut().set_flat(&base);
        // input gradient
        for r in 0..2 {
            for c in 0..5 {
                let mut xp = x.clone();
                xp.set(r, c, x.get(r, c) + h);
                let yp = net.predict(&xp).unwrap();
                xp.set(r, c, x.get(r, c) - h);
                let ym = net.predict(&xp).unwrap();
                let fd: f64 = yp.as_slice().iter().zip(ym.as_slice()).zip(g.as_slice()).map(|((a, b), w)| (a - b) * w).sum::<f64>() / (2.0 * h);
                assert!((fd - gx.get(r, c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn backward_is_linear_and_zero_preserving() {
        let mut rng = SeedTree::new(21).stream("init", &[]);
        let net = Mlp::new(&[3, 8, 2], &mut rng);
        let x = random_input(3, 4, 22);
        let (_, cache) = net.forward(&x).unwrap();
        let (zero, _) = net.backward(&cache, &Matrix::zeros(2, 4)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let g1 = random_input(2, 4, 23);
        let g2 = random_input(2, 4, 24);
        let mut sum = g1.clone();
        for (a, b) in sum.as_mut_slice().iter_mut().zip(g2.as_slice()) {
            *a += b;
        }
        let (a, _) = net.backward(&cache, &g1).unwrap();
        let (b, _) = net.backward(&cache, &g2).unwrap();
        let (c, _) = net.backward(&cache, &sum).unwrap();
        for ((x, y), z) in a.iter().zip(b.iter()).zip(c.iter()) {
            assert!((x + y - z).abs() < 1e-12);
        }
    }

    #[test]
    fn stale_cache_detected() {
        let mut rng = SeedTree::new(5).stream("init", &[]);
        let mut net = Mlp::new(&[2, 4, 1], &mut rng);
        let (_, cache) = net.forward(&random_input(2, 3, 6)).unwrap();
        net.params_mut().scale(0.5);
        assert!(matches!(net.backward(&cache, &Matrix::zeros(1, 3)), Err(Error::StaleCache { .. })));
    }

    #[test]
    fn soft_update_rates() {
        let mut rng = SeedTree::new(8).stream("init", &[]);
        let main = Mlp::new(&[2, 3, 1], &mut rng);
        let orig = Mlp::new(&[2, 3, 1], &mut rng);
        let mut t = orig.clone();
        t.soft_update_from(&main, 0.0).unwrap();
        assert_eq!(t, orig);
        t.soft_update_from(&main, 1.0).unwrap();
        assert_eq!(t, main);
        let mut p = Params::zeros(&[1, 1]);
        p.layers[0].weights.set(0, 0, 2.0);
        let main = Mlp::from_params(p);
        let mut t = Mlp::zeros(&[1, 1]);
        t.soft_update_from(&main, 0.5).unwrap();
        assert_eq!(t.params().layers[0].weights.get(0, 0), 1.0);
    }
}
