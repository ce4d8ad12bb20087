//! Time-dependent score networks.

mod checkpoint;
mod embedding;
mod random_feature;
mod swish;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use embedding::TimeEmbedding;
pub use random_feature::RandomFeatureNet;
pub use swish::SwishMlp;

use crate::error::{Error, Result};
use crate::sde::{LinearSde, ScoreField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    RandomFeature,
    Swish,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::RandomFeature => "random-feature",
            ModelKind::Swish => "swish",
        }
    }
}

/// Flat gradient with the same layout as [`ScoreModel::params`].
pub type ParamGradient = Vec<f64>;

/// A batch of DSM regression pairs: perturbed points, times, targets and weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DsmBatch {
    pub dim: usize,
    /// `len × dim`, row-major.
    pub xt: Vec<f64>,
    pub t: Vec<f64>,
    /// `len × dim`, row-major.
    pub target: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl DsmBatch {
    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            xt: Vec::with_capacity(n * dim),
            t: Vec::with_capacity(n),
            target: Vec::with_capacity(n * dim),
            lambda: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn clear(&mut self) {
        self.xt.clear();
        self.t.clear();
        self.target.clear();
        self.lambda.clear();
    }

    pub fn push(&mut self, xt: &[f64], t: f64, target: &[f64], lambda: f64) {
        self.xt.extend_from_slice(xt);
        self.t.push(t);
        self.target.extend_from_slice(target);
        self.lambda.push(lambda);
    }
}

/// Either score network; parameters exposed as one flat trainable vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreModel {
    RandomFeature(RandomFeatureNet),
    Swish(SwishMlp),
}

impl ScoreModel {
    pub fn random_feature(d: usize, m: usize, d_e: usize, horizon: f64, seed: u64) -> Self {
        ScoreModel::RandomFeature(RandomFeatureNet::new(
            d,
            m,
            TimeEmbedding::new(d_e, horizon),
            seed,
        ))
    }

    pub fn swish(d: usize, h: usize, d_e: usize, horizon: f64, seed: u64) -> Self {
        ScoreModel::Swish(SwishMlp::new(d, h, TimeEmbedding::new(d_e, horizon), seed))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ScoreModel::RandomFeature(_) => ModelKind::RandomFeature,
            ScoreModel::Swish(_) => ModelKind::Swish,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::RandomFeature(n) => n.dim(),
            ScoreModel::Swish(n) => n.dim(),
        }
    }

    /// `m` for random-feature nets, `h` for Swish nets.
    pub fn width(&self) -> usize {
        match self {
            ScoreModel::RandomFeature(n) => n.width(),
            ScoreModel::Swish(n) => n.width(),
        }
    }

    pub fn embedding(&self) -> &TimeEmbedding {
        match self {
            ScoreModel::RandomFeature(n) => n.embedding(),
            ScoreModel::Swish(n) => n.embedding(),
        }
    }

    pub fn init_seed(&self) -> u64 {
        match self {
            ScoreModel::RandomFeature(n) => n.init_seed(),
            ScoreModel::Swish(n) => n.init_seed(),
        }
    }

    /// Trainable parameters: `A` for random-feature nets, everything for Swish.
    pub fn params(&self) -> &[f64] {
        match self {
            ScoreModel::RandomFeature(n) => n.a(),
            ScoreModel::Swish(n) => n.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            ScoreModel::RandomFeature(n) => n.a_mut(),
            ScoreModel::Swish(n) => n.params_mut(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    pub fn as_random_feature(&self) -> Result<&RandomFeatureNet> {
        match self {
            ScoreModel::RandomFeature(n) => Ok(n),
            ScoreModel::Swish(_) => Err(Error::UnsupportedModel("swish")),
        }
    }

    pub fn as_random_feature_mut(&mut self) -> Result<&mut RandomFeatureNet> {
        match self {
            ScoreModel::RandomFeature(n) => Ok(n),
            ScoreModel::Swish(_) => Err(Error::UnsupportedModel("swish")),
        }
    }

    fn check(&self, x: &[f64], t: f64, sde: &LinearSde) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        if !(sde.t_min()..=sde.horizon()).contains(&t) {
            return Err(Error::Domain(format!(
                "t = {t} outside [{}, {}]",
                sde.t_min(),
                sde.horizon()
            )));
        }
        if let Some(i) = self.params().iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!(
                "parameter {i} is {}",
                self.params()[i]
            )));
        }
        Ok(())
    }

    /// Checked forward pass: validates time range, dimension and parameter finiteness.
    pub fn forward(&self, sde: &LinearSde, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, t, sde)?;
        Ok(self.score(x, t))
    }

    /// Checked spatial Jacobian `∂s/∂x`, d×d row-major.
    pub fn forward_dx(&self, sde: &LinearSde, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check(x, t, sde)?;
        Ok(self.jacobian(x, t))
    }

    /// Unchecked Jacobian.
    pub fn jacobian(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self {
            ScoreModel::RandomFeature(n) => n.forward_dx(x, t),
            ScoreModel::Swish(n) => n.forward_dx(x, t),
        }
    }

    /// Scores at many 1-D points for one time, sharing the time-dependent work.
    pub fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        match self {
            ScoreModel::RandomFeature(n) => n.score_on_grid(xs, t),
            ScoreModel::Swish(n) => n.score_on_grid(xs, t),
        }
    }

    /// `sqrt(‖A‖_F² / m)`; random-feature nets only.
    pub fn rkhs_norm(&self) -> Result<f64> {
        Ok(self.as_random_feature()?.rkhs_norm())
    }

    fn loss_one(&self, batch: &DsmBatch, i: usize, scale: f64, grad: Option<&mut [f64]>) -> f64 {
        let d = batch.dim;
        let xt = &batch.xt[i * d..(i + 1) * d];
        let target = &batch.target[i * d..(i + 1) * d];
        let (t, lambda) = (batch.t[i], batch.lambda[i]);
        match self {
            ScoreModel::RandomFeature(n) => n.loss_grad_one(xt, t, target, lambda, scale, grad),
            ScoreModel::Swish(n) => n.loss_grad_one(xt, t, target, lambda, scale, grad),
        }
    }

    /// Per-pair weighted squared residuals `λ_i ‖s(x_i, t_i) - target_i‖²`.
    pub fn dsm_terms(&self, batch: &DsmBatch) -> Vec<f64> {
        (0..batch.len())
            .map(|i| self.loss_one(batch, i, 0.0, None))
            .collect()
    }

    /// Mean of [`ScoreModel::dsm_terms`] and its exact gradient with respect to
    /// [`ScoreModel::params`], written into `grad` (overwritten).
    pub fn dsm_loss_grad(&self, batch: &DsmBatch, grad: &mut [f64]) -> f64 {
        assert_eq!(grad.len(), self.n_params());
        assert!(!batch.is_empty(), "empty DSM batch");
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut terms = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            terms.push(self.loss_one(batch, i, scale, Some(grad)));
        }
        crate::quad::pairwise_sum(&terms) * scale
    }

    /// Gradient of the mean DSM loss over `batch`.
    pub fn grad_dsm(&self, batch: &DsmBatch) -> ParamGradient {
        let mut grad = vec![0.0; self.n_params()];
        self.dsm_loss_grad(batch, &mut grad);
        grad
    }
}

impl ScoreField for ScoreModel {
    fn dim(&self) -> usize {
        ScoreModel::dim(self)
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match self {
            ScoreModel::RandomFeature(n) => n.forward_into(x, t, out),
            ScoreModel::Swish(n) => n.forward_into(x, t, out),
        }
    }

    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        let d = ScoreModel::dim(self);
        let jac = self.jacobian(x, t);
        (0..d).map(|k| jac[k * d + k]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn random_batch(d: usize, n: usize, seed: u64) -> DsmBatch {
        let mut rng = rng_from_seed(seed);
        let mut b = DsmBatch::with_capacity(d, n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            b.push(
                &x,
                rng.random_range(0.003..3.0),
                &y,
                rng.random_range(0.1..1.0),
            );
        }
        b
    }

    fn fd_check(model: &mut ScoreModel, batch: &DsmBatch, tol: f64) {
        let grad = model.grad_dsm(batch);
        let loss =
            |m: &ScoreModel| crate::quad::pairwise_sum(&m.dsm_terms(batch)) / batch.len() as f64;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        for (i, &g) in grad.iter().enumerate() {
            let h = 1e-5 * (1.0 + model.params()[i].abs());
            let orig = model.params()[i];
            model.params_mut()[i] = orig + h;
            let lp = loss(model);
            model.params_mut()[i] = orig - h;
            let lm = loss(model);
            model.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (g - fd).abs() / fd.abs().max(1e-3 * gnorm).max(1e-12);
            assert!(
                err < tol,
                "param {i}: analytic {} vs fd {fd} (rel {err})",
                g
            );
        }
    }

    #[test]
    fn random_feature_gradient_matches_differences() {
        let mut model = ScoreModel::random_feature(2, 24, 4, 3.0, 1);
        let mut rng = rng_from_seed(2);
        model
            .params_mut()
            .iter_mut()
            .for_each(|a| *a = rng.random_range(-3.0..3.0));
        fd_check(&mut model, &random_batch(2, 50, 3), 1e-5);
    }

    #[test]
    fn swish_gradient_matches_differences() {
        let mut model = ScoreModel::swish(1, 16, 4, 3.0, 4);
        fd_check(&mut model, &random_batch(1, 50, 5), 1e-4);
    }

    #[test]
    fn zero_model_with_zero_targets_has_zero_gradient() {
        let model = ScoreModel::random_feature(1, 8, 4, 1.0, 0);
        let mut b = random_batch(1, 10, 1);
        b.target.iter_mut().for_each(|y| *y = 0.0);
        assert!(model.grad_dsm(&b).iter().all(|g| *g == 0.0));
        let out = model.score(&[0.4], 0.5);
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn checked_forward_rejects_bad_inputs() {
        let sde = LinearSde::ou(1.0).unwrap();
        let mut model = ScoreModel::random_feature(1, 4, 4, 1.0, 0);
        assert!(matches!(
            model.forward(&sde, &[0.0], 2.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            model.forward(&sde, &[0.0], 0.0),
            Err(Error::Domain(_))
        ));
        model.params_mut()[0] = f64::NAN;
        assert!(matches!(
            model.forward(&sde, &[0.0], 0.5),
            Err(Error::NonFinite(_))
        ));
        let swish = ScoreModel::swish(1, 4, 4, 1.0, 0);
        assert!(matches!(swish.rkhs_norm(), Err(Error::UnsupportedModel(_))));
    }
}
