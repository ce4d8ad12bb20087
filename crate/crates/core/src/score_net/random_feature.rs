use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TimeEmbedding;
use crate::seed::rng_from_seed;

/// `s(x, t) = (1/m) A ReLU(W x + U e(t))` with trainable `A` (d×m) and frozen
/// rows `(w_i, u_i)` normalized to `‖w_i‖₁ + ‖u_i‖₁ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFeatureNet {
    d: usize,
    m: usize,
    embedding: TimeEmbedding,
    /// m × d, row-major.
    w: Vec<f64>,
    /// m × d_e, row-major.
    u: Vec<f64>,
    /// d × m, row-major.
    a: Vec<f64>,
    init_seed: u64,
}

impl RandomFeatureNet {
    /// Frozen rows drawn i.i.d. standard normal in `ℝ^{d+d_e}` and rescaled to unit
    /// L1 norm; `A = 0`.
    pub fn new(d: usize, m: usize, embedding: TimeEmbedding, seed: u64) -> Self {
        assert!(d >= 1 && m >= 1, "random-feature net needs d, m >= 1");
        let de = embedding.dim;
        let mut rng = rng_from_seed(seed);
        let mut w = Vec::with_capacity(m * d);
        let mut u = Vec::with_capacity(m * de);
        for _ in 0..m {
            let row: Vec<f64> = (0..d + de)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let l1: f64 = row.iter().map(|v| v.abs()).sum();
            w.extend(row[..d].iter().map(|v| v / l1));
            u.extend(row[d..].iter().map(|v| v / l1));
        }
        Self {
            d,
            m,
            embedding,
            w,
            u,
            a: vec![0.0; d * m],
            init_seed: seed,
        }
    }

    pub(crate) fn from_parts(
        d: usize,
        m: usize,
        embedding: TimeEmbedding,
        w: Vec<f64>,
        u: Vec<f64>,
        a: Vec<f64>,
        init_seed: u64,
    ) -> Self {
        assert_eq!(w.len(), m * d);
        assert_eq!(u.len(), m * embedding.dim);
        assert_eq!(a.len(), d * m);
        Self {
            d,
            m,
            embedding,
            w,
            u,
            a,
            init_seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.m
    }

    pub fn embedding(&self) -> &TimeEmbedding {
        &self.embedding
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn a_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn set_a(&mut self, a: &[f64]) {
        assert_eq!(a.len(), self.a.len());
        self.a.copy_from_slice(a);
    }

    /// `U e(t)`, one entry per feature.
    pub fn time_offsets(&self, t: f64) -> Vec<f64> {
        let e = self.embedding.eval(t);
        self.u
            .chunks_exact(e.len())
            .map(|ui| ui.iter().zip(&e).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Pre-activations `W x + U e(t)` given precomputed time offsets.
    pub fn preactivations_with(&self, x: &[f64], offsets: &[f64], out: &mut [f64]) {
        for ((o, wi), b) in out.iter_mut().zip(self.w.chunks_exact(self.d)).zip(offsets) {
            *o = wi.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
        }
    }

    /// ReLU features `σ(W x + U e(t))`.
    pub fn features(&self, x: &[f64], t: f64) -> Vec<f64> {
        let offsets = self.time_offsets(t);
        let mut out = vec![0.0; self.m];
        self.preactivations_with(x, &offsets, &mut out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        out
    }

    /// `(1/m) A φ` for a feature vector `φ`.
    pub fn readout(&self, features: &[f64], out: &mut [f64]) {
        let inv_m = 1.0 / self.m as f64;
        for (o, ak) in out.iter_mut().zip(self.a.chunks_exact(self.m)) {
            *o = inv_m * ak.iter().zip(features).map(|(a, f)| a * f).sum::<f64>();
        }
    }

    pub fn forward_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let phi = self.features(x, t);
        self.readout(&phi, out);
    }

    /// `∂s/∂x = (1/m) Σ a_i w_iᵀ 1[w_iᵀx + u_iᵀe(t) > 0]`, d×d row-major.
    pub fn forward_dx(&self, x: &[f64], t: f64) -> Vec<f64> {
        let offsets = self.time_offsets(t);
        let mut pre = vec![0.0; self.m];
        self.preactivations_with(x, &offsets, &mut pre);
        let inv_m = 1.0 / self.m as f64;
        let mut jac = vec![0.0; self.d * self.d];
        for (i, p) in pre.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            let wi = &self.w[i * self.d..(i + 1) * self.d];
            for k in 0..self.d {
                let aki = self.a[k * self.m + i] * inv_m;
                for (j, wij) in wi.iter().enumerate() {
                    jac[k * self.d + j] += aki * wij;
                }
            }
        }
        jac
    }

    /// `sqrt(‖A‖_F² / m)`.
    pub fn rkhs_norm(&self) -> f64 {
        (self.a.iter().map(|v| v * v).sum::<f64>() / self.m as f64).sqrt()
    }

    /// Scores on a 1-D grid at a fixed time.
    pub fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        assert_eq!(self.d, 1);
        let offsets = self.time_offsets(t);
        let inv_m = 1.0 / self.m as f64;
        xs.iter()
            .map(|&x| {
                inv_m
                    * self
                        .w
                        .iter()
                        .zip(&offsets)
                        .zip(&self.a)
                        .map(|((w, b), a)| a * (w * x + b).max(0.0))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Squared-residual loss `λ ‖s - target‖²` and, scaled by `scale`, its gradient
    /// with respect to `A` accumulated into `grad`.
    pub(crate) fn loss_grad_one(
        &self,
        xt: &[f64],
        t: f64,
        target: &[f64],
        lambda: f64,
        scale: f64,
        grad: Option<&mut [f64]>,
    ) -> f64 {
        let phi = self.features(xt, t);
        let mut s = vec![0.0; self.d];
        self.readout(&phi, &mut s);
        let mut loss = 0.0;
        let inv_m = 1.0 / self.m as f64;
        let mut grad = grad;
        for k in 0..self.d {
            let res = s[k] - target[k];
            loss += lambda * res * res;
            if let Some(g) = grad.as_deref_mut() {
                let c = scale * 2.0 * lambda * res * inv_m;
                for (gi, f) in g[k * self.m..(k + 1) * self.m].iter_mut().zip(&phi) {
                    *gi += c * f;
                }
            }
        }
        loss
    }

    #[cfg(test)]
    pub(crate) fn scale_row(&mut self, i: usize, c: f64) {
        for v in &mut self.w[i * self.d..(i + 1) * self.d] {
            *v *= c;
        }
        let de = self.embedding.dim;
        for v in &mut self.u[i * de..(i + 1) * de] {
            *v *= c;
        }
        for k in 0..self.d {
            self.a[k * self.m + i] /= c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(d: usize, m: usize, seed: u64) -> RandomFeatureNet {
        RandomFeatureNet::new(d, m, TimeEmbedding::new(4, 3.0), seed)
    }

    #[test]
    fn rows_have_unit_l1_norm() {
        let rf = net(1, 8, 1);
        for i in 0..8 {
            let l1: f64 = rf.w()[i..i + 1]
                .iter()
                .chain(&rf.u()[i * 4..(i + 1) * 4])
                .map(|v| v.abs())
                .sum();
            assert!((l1 - 1.0).abs() < 1e-12);
        }
        assert!(rf.a().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(net(2, 16, 9), net(2, 16, 9));
        assert_ne!(net(2, 16, 9).w(), net(2, 16, 10).w());
    }

    #[test]
    fn hand_evaluated_single_feature() {
        // m = 1, a = 2, w = 0.5, u = 0.5, e(t) = 1 at t = 0 for the first embedding
        // slot when d_e = 1 ... use a custom embedding value by choosing t = T.
        let emb = TimeEmbedding::new(1, 3.0);
        let rf = RandomFeatureNet::from_parts(1, 1, emb, vec![0.5], vec![0.5], vec![2.0], 0);
        let mut out = [0.0];
        rf.forward_into(&[3.0], 3.0, &mut out);
        assert!((out[0] - 4.0).abs() < 1e-15);
        assert!((rf.forward_dx(&[3.0], 3.0)[0] - 1.0).abs() < 1e-15);
        // dead region
        rf.forward_into(&[-10.0], 3.0, &mut out);
        assert_eq!(out[0], 0.0);
        assert_eq!(rf.forward_dx(&[-10.0], 3.0)[0], 0.0);
    }

    #[test]
    fn rkhs_norm_examples() {
        let mut rf = net(1, 4, 2);
        assert_eq!(rf.rkhs_norm(), 0.0);
        rf.set_a(&[2.0, 2.0, 2.0, 2.0]);
        assert!((rf.rkhs_norm() - 2.0).abs() < 1e-15);
        let base = rf.rkhs_norm();
        rf.a_mut().iter_mut().for_each(|a| *a *= -3.0);
        assert!((rf.rkhs_norm() - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn forward_is_linear_in_a() {
        let mut rng = rng_from_seed(4);
        let mut rf = net(2, 32, 3);
        let a1: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a2: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = a1.iter().zip(&a2).map(|(a, b)| a + b).collect();
        let x = [0.3, -1.2];
        let eval = |rf: &mut RandomFeatureNet, a: &[f64]| {
            rf.set_a(a);
            let mut o = [0.0; 2];
            rf.forward_into(&x, 1.1, &mut o);
            o
        };
        let (s1, s2, s12) = (eval(&mut rf, &a1), eval(&mut rf, &a2), eval(&mut rf, &sum));
        for k in 0..2 {
            assert!((s12[k] - s1[k] - s2[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn relu_positive_homogeneity() {
        let mut rng = rng_from_seed(8);
        let mut rf = net(1, 16, 5);
        let a: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        rf.set_a(&a);
        let before: Vec<f64> = (0..20)
            .map(|i| rf.score_on_grid(&[i as f64 * 0.4 - 4.0], 0.9)[0])
            .collect();
        rf.scale_row(3, 7.5);
        rf.scale_row(11, 0.2);
        for (i, b) in before.iter().enumerate() {
            let after = rf.score_on_grid(&[i as f64 * 0.4 - 4.0], 0.9)[0];
            assert!((after - b).abs() < 1e-12);
        }
    }
}
