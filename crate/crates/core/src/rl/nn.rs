//! Dense ReLU networks with hand-derived backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `(out, in)`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn new<R: Rng>(fan_in: usize, fan_out: usize, bound: f64, rng: &mut R) -> Self {
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
        let b = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..=bound));
        Self { w, b }
    }

    pub fn fan_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.w.nrows()
    }
}

/// Multi-layer perceptron: ReLU on hidden layers, identity output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backprop.
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`. Hidden layers use the `1/√fan_in`
    /// uniform init; the output layer starts at `±out_bound`.
    pub fn new<R: Rng>(sizes: &[usize], out_bound: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output size");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let bound = if i + 1 == n { out_bound } else { 1.0 / (sizes[i] as f64).sqrt() };
                Dense::new(sizes[i], sizes[i + 1], bound, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                w: Array2::zeros((w[1], w[0])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(Dense::fan_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w.t());
            z += &layer.b;
            if i != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        (h, MlpCache { inputs })
    }

    /// Backpropagates `grad_out = ∂L/∂output` (batch × out). Returns parameter
    /// gradients and `∂L/∂input`.
    pub fn backward(&self, cache: &MlpCache, grad_out: Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut g = grad_out;
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let input = &cache.inputs[i];
            gw.push(g.t().dot(input));
            gb.push(g.sum_axis(Axis(0)));
            let mut gin = g.dot(&layer.w);
            if i > 0 {
                // input of layer i is relu output of layer i-1
                ndarray::Zip::from(&mut gin).and(input).for_each(|gv, &a| {
                    if a <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            g = gin;
        }
        gw.reverse();
        gb.reverse();
        (MlpGrads { w: gw, b: gb }, g)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter vector length mismatch");
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = flat[k];
                k += 1;
            }
        }
    }

    /// `self ← (1 − τ)·self + τ·online`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.w.zip_mut_with(&o.w, |a, &b| *a = (1.0 - tau) * *a + tau * b);
            t.b.zip_mut_with(&o.b, |a, &b| *a = (1.0 - tau) * *a + tau * b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    pub fn hash_into(&self, h: &mut Sha256) {
        for l in &self.layers {
            for v in l.w.iter().chain(l.b.iter()) {
                h.update(v.to_le_bytes());
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: MlpGrads,
    v: MlpGrads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros = MlpGrads {
            w: net.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            b: net.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, g: &MlpGrads) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = self.lr * c2.sqrt() / c1;
        let eps = self.eps * c2.sqrt();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.w)
                .and(&mut self.m.w[i])
                .and(&mut self.v.w[i])
                .and(&g.w[i])
                .for_each(|p, m, v, &gr| {
                    *m = b1 * *m + (1.0 - b1) * gr;
                    *v = b2 * *v + (1.0 - b2) * gr * gr;
                    *p -= step * *m / (v.sqrt() + eps);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(&mut self.m.b[i])
                .and(&mut self.v.b[i])
                .and(&g.b[i])
                .for_each(|p, m, v, &gr| {
                    *m = b1 * *m + (1.0 - b1) * gr;
                    *v = b2 * *v + (1.0 - b2) * gr * gr;
                    *p -= step * *m / (v.sqrt() + eps);
                });
        }
    }
}

/// Smooth radial squash of `z ∈ ℝ³` into the open unit ball:
/// `f(z) = tanh(‖z‖)·z/‖z‖`.
pub fn ball_squash(z: [f64; 3]) -> [f64; 3] {
    let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
    let g = squash_gain(r);
    [g * z[0], g * z[1], g * z[2]]
}

fn squash_gain(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 - r * r / 3.0
    } else {
        r.tanh() / r
    }
}

/// `Jᵀ·upstream` for [`ball_squash`] (the Jacobian is symmetric).
pub fn ball_squash_backward(z: [f64; 3], upstream: [f64; 3]) -> [f64; 3] {
    let r2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
    let r = r2.sqrt();
    let g = squash_gain(r);
    // (g'(r)/r), with its series near zero
    let k = if r < 1e-3 {
        -2.0 / 3.0 + 8.0 * r2 / 15.0
    } else {
        let t = r.tanh();
        (r * (1.0 - t * t) - t) / (r2 * r)
    };
    let zu = z[0] * upstream[0] + z[1] * upstream[1] + z[2] * upstream[2];
    [
        g * upstream[0] + k * zu * z[0],
        g * upstream[1] + k * zu * z[1],
        g * upstream[2] + k * zu * z[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[4, 8, 3]);
        let y = net.forward(array![[1.0, -2.0, 3.0, 0.5]].view());
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences_on_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[3, 5, 2], 0.5, &mut rng);
        let x = array![[0.3, -0.7, 1.1]];
        let (_, cache) = net.forward_cached(x.view());
        let (_, gin) = net.backward(&cache, array![[1.0, -0.5]]);
        let f = |x: &Array2<f64>| {
            let y = net.forward(x.view());
            y[[0, 0]] - 0.5 * y[[0, 1]]
        };
        for j in 0..3 {
            let mut xp = x.clone();
            xp[[0, j]] += 1e-6;
            let mut xm = x.clone();
            xm[[0, j]] -= 1e-6;
            let num = (f(&xp) - f(&xm)) / 2e-6;
            assert!((num - gin[[0, j]]).abs() < 1e-7, "{num} vs {}", gin[[0, j]]);
        }
    }

    #[test]
    fn squash_bounded_and_jacobian() {
        for z in [[0.0, 0.0, 0.0], [1e-5, -2e-5, 0.0], [0.3, -0.2, 0.9], [8.0, -9.0, 20.0], [5e-4, 0.0, 1e-4]] {
            let a = ball_squash(z);
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            assert!(n < 1.0 + 1e-15);
            let u = [0.7, -1.3, 0.4];
            let analytic = ball_squash_backward(z, u);
            for j in 0..3 {
                let h = 1e-6;
                let mut zp = z;
                zp[j] += h;
                let mut zm = z;
                zm[j] -= h;
                let fp = ball_squash(zp);
                let fm = ball_squash(zm);
                let num: f64 = (0..3).map(|i| u[i] * (fp[i] - fm[i]) / (2.0 * h)).sum();
                assert!((num - analytic[j]).abs() < 1e-7, "z={z:?} j={j}: {num} vs {}", analytic[j]);
            }
        }
    }

    #[test]
    fn soft_update_blends() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Mlp::new(&[2, 3, 1], 0.1, &mut rng);
        let b = Mlp::new(&[2, 3, 1], 0.1, &mut rng);
        let mut t = a.clone();
        t.soft_update(&b, 0.25);
        for ((x, y), z) in a.params_flat().iter().zip(b.params_flat()).zip(t.params_flat()) {
            assert!((0.75 * x + 0.25 * y - z).abs() < 1e-15);
        }
    }
}
