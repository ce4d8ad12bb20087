use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TimeEmbedding;
use crate::seed::rng_from_seed;

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn swish_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// One-hidden-layer network `s(x, t) = W₂ swish(W₁ [x; e(t)] + b₁) + b₂`,
/// all parameters trainable.
///
/// Parameters live in one flat vector laid out as `W₁ (h × (d+d_e))`, `b₁ (h)`,
/// `W₂ (d × h)`, `b₂ (d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwishMlp {
    d: usize,
    h: usize,
    embedding: TimeEmbedding,
    params: Vec<f64>,
    init_seed: u64,
    /// Multiplier on the hidden-to-output weights (`W₂`); 1 is the plain network.
    #[serde(default = "unit_scale")]
    readout_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl SwishMlp {
    pub const DEFAULT_WIDTH: usize = 128;

    pub fn param_count(d: usize, h: usize, d_e: usize) -> usize {
        h * (d + d_e + 1) + d * (h + 1)
    }

    /// Symmetric uniform init with scale `1/sqrt(fan_in)` per layer.
    pub fn new(d: usize, h: usize, embedding: TimeEmbedding, seed: u64) -> Self {
        assert!(d >= 1 && h >= 1, "swish network needs d, h >= 1");
        let n_in = d + embedding.dim;
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(Self::param_count(d, h, embedding.dim));
        let b_in = 1.0 / (n_in as f64).sqrt();
        let b_hidden = 1.0 / (h as f64).sqrt();
        for _ in 0..h * n_in + h {
            params.push(rng.random_range(-b_in..b_in));
        }
        for _ in 0..d * h + d {
            params.push(rng.random_range(-b_hidden..b_hidden));
        }
        Self {
            d,
            h,
            embedding,
            params,
            init_seed: seed,
            readout_scale: 1.0,
        }
    }

    pub(crate) fn from_parts(
        d: usize,
        h: usize,
        embedding: TimeEmbedding,
        params: Vec<f64>,
        init_seed: u64,
    ) -> Self {
        assert_eq!(params.len(), Self::param_count(d, h, embedding.dim));
        Self {
            d,
            h,
            embedding,
            params,
            init_seed,
            readout_scale: 1.0,
        }
    }

    /// Same network with `s = W₂ swish(·) · scale + b₂`.
    pub fn with_readout_scale(mut self, scale: f64) -> Self {
        self.readout_scale = scale;
        self
    }

    pub fn readout_scale(&self) -> f64 {
        self.readout_scale
    }

    pub(crate) fn readout_scale_ref(&self) -> &f64 {
        &self.readout_scale
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.h
    }

    pub fn embedding(&self) -> &TimeEmbedding {
        &self.embedding
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_in(&self) -> usize {
        self.d + self.embedding.dim
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let n_in = self.n_in();
        let (w1, rest) = self.params.split_at(self.h * n_in);
        let (b1, rest) = rest.split_at(self.h);
        let (w2, b2) = rest.split_at(self.d * self.h);
        (w1, b1, w2, b2)
    }

    /// Hidden pre-activations `W₁ [x; e] + b₁`.
    fn hidden_pre(&self, x: &[f64], e: &[f64], pre: &mut [f64]) {
        let n_in = self.n_in();
        let (w1, b1, _, _) = self.split();
        for (i, p) in pre.iter_mut().enumerate() {
            let row = &w1[i * n_in..(i + 1) * n_in];
            let mut acc = b1[i];
            for (wj, xj) in row[..self.d].iter().zip(x) {
                acc += wj * xj;
            }
            for (wj, ej) in row[self.d..].iter().zip(e) {
                acc += wj * ej;
            }
            *p = acc;
        }
    }

    pub fn forward_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let e = self.embedding.eval(t);
        let mut pre = vec![0.0; self.h];
        self.hidden_pre(x, &e, &mut pre);
        let (_, _, w2, b2) = self.split();
        for k in 0..self.d {
            let row = &w2[k * self.h..(k + 1) * self.h];
            out[k] = b2[k]
                + self.readout_scale
                    * row
                        .iter()
                        .zip(&pre)
                        .map(|(w, z)| w * swish(*z))
                        .sum::<f64>();
        }
    }

    /// `∂s_k/∂x_j = Σ_i W₂[k,i] swish'(z_i) W₁[i,j]`, d×d row-major.
    pub fn forward_dx(&self, x: &[f64], t: f64) -> Vec<f64> {
        let e = self.embedding.eval(t);
        let mut pre = vec![0.0; self.h];
        self.hidden_pre(x, &e, &mut pre);
        let n_in = self.n_in();
        let (w1, _, w2, _) = self.split();
        let mut jac = vec![0.0; self.d * self.d];
        for (i, z) in pre.iter().enumerate() {
            let sp = swish_prime(*z);
            for k in 0..self.d {
                let c = self.readout_scale * w2[k * self.h + i] * sp;
                for j in 0..self.d {
                    jac[k * self.d + j] += c * w1[i * n_in + j];
                }
            }
        }
        jac
    }

    /// Scores on a 1-D grid at a fixed time.
    pub fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        assert_eq!(self.d, 1);
        let e = self.embedding.eval(t);
        let n_in = self.n_in();
        let (w1, b1, w2, b2) = self.split();
        let slope: Vec<f64> = (0..self.h).map(|i| w1[i * n_in]).collect();
        let bias: Vec<f64> = (0..self.h)
            .map(|i| {
                b1[i]
                    + w1[i * n_in + 1..(i + 1) * n_in]
                        .iter()
                        .zip(&e)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        xs.iter()
            .map(|&x| {
                b2[0]
                    + self.readout_scale
                        * slope
                            .iter()
                            .zip(&bias)
                            .zip(w2)
                            .map(|((s, b), w)| w * swish(s * x + b))
                            .sum::<f64>()
            })
            .collect()
    }

    /// Squared-residual loss `λ ‖s - target‖²`; when `grad` is given, adds
    /// `scale · ∇_θ` of that loss into it.
    pub(crate) fn loss_grad_one(
        &self,
        xt: &[f64],
        t: f64,
        target: &[f64],
        lambda: f64,
        scale: f64,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let e = self.embedding.eval(t);
        let n_in = self.n_in();
        let h = self.h;
        let mut pre = vec![0.0; h];
        self.hidden_pre(xt, &e, &mut pre);
        let act: Vec<f64> = pre.iter().map(|z| swish(*z)).collect();
        let (_, _, w2, b2) = self.split();
        let mut res = vec![0.0; self.d];
        let mut loss = 0.0;
        for k in 0..self.d {
            let s = b2[k]
                + self.readout_scale
                    * w2[k * h..(k + 1) * h]
                        .iter()
                        .zip(&act)
                        .map(|(w, a)| w * a)
                        .sum::<f64>();
            res[k] = s - target[k];
            loss += lambda * res[k] * res[k];
        }
        let Some(grad) = grad else {
            return loss;
        };
        let (g_w1, rest) = grad.split_at_mut(h * n_in);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(self.d * h);
        let mut delta = vec![0.0; h];
        for k in 0..self.d {
            let c = scale * 2.0 * lambda * res[k];
            g_b2[k] += c;
            let cs = c * self.readout_scale;
            let w2k = &w2[k * h..(k + 1) * h];
            for i in 0..h {
                g_w2[k * h + i] += cs * act[i];
                delta[i] += cs * w2k[i];
            }
        }
        for i in 0..h {
            let di = delta[i] * swish_prime(pre[i]);
            g_b1[i] += di;
            let row = &mut g_w1[i * n_in..(i + 1) * n_in];
            for (gj, xj) in row[..self.d].iter_mut().zip(xt) {
                *gj += di * xj;
            }
            for (gj, ej) in row[self.d..].iter_mut().zip(&e) {
                *gj += di * ej;
            }
        }
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let net = SwishMlp::new(2, 16, TimeEmbedding::new(4, 1.0), 0);
        assert_eq!(net.params().len(), 16 * (2 + 4 + 1) + 2 * (16 + 1));
    }

    #[test]
    fn swish_derivative_matches_difference() {
        for z in [-6.0, -1.0, 0.0, 0.4, 3.0] {
            let h = 1e-6;
            let fd = (swish(z + h) - swish(z - h)) / (2.0 * h);
            assert!((swish_prime(z) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_path_matches_pointwise_forward() {
        let net = SwishMlp::new(1, 32, TimeEmbedding::new(4, 3.0), 7);
        let xs = [-3.0, -0.1, 0.0, 2.5];
        let grid = net.score_on_grid(&xs, 0.8);
        for (x, g) in xs.iter().zip(grid) {
            let mut o = [0.0];
            net.forward_into(&[*x], 0.8, &mut o);
            assert!((o[0] - g).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let net = SwishMlp::new(2, 24, TimeEmbedding::new(4, 2.0), 3);
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let t = rng.random_range(0.002..2.0);
            let jac = net.forward_dx(&x, t);
            for j in 0..2 {
                let h = 1e-5;
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let (mut sp, mut sm) = ([0.0; 2], [0.0; 2]);
                net.forward_into(&xp, t, &mut sp);
                net.forward_into(&xm, t, &mut sm);
                for k in 0..2 {
                    let fd = (sp[k] - sm[k]) / (2.0 * h);
                    let rel = (jac[k * 2 + j] - fd).abs() / fd.abs().max(1e-2);
                    assert!(rel < 1e-5, "rel {rel}");
                }
            }
        }
    }
}
