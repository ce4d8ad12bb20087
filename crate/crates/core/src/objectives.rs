//! Denoising and population score-matching losses, plus the quadratic-form view of
//! the population loss for random-feature models.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{mean_and_stderr, pairwise_sum, trapezoid, UniformGrid};
use crate::score_net::{DsmBatch, RandomFeatureNet, ScoreModel};
use crate::sde::{LinearSde, Weighting};
use crate::seed::rng_from_seed;
use crate::targets::{GaussianMixture, MarginalScore};

/// Number of time nodes used by [`sm_population`] by default.
pub const SM_TIME_NODES: usize = 64;
/// Largest tolerated probability mass of `p_t` falling outside the grid.
pub const GRID_MASS_TOLERANCE: f64 = 1e-6;
/// Ridge added to `B1` when solving for the optimum.
pub const OPTIMUM_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub value: f64,
    pub stderr: f64,
    pub n_time_samples: usize,
    pub n_space_samples: usize,
    pub seed: Option<u64>,
}

/// `n` i.i.d. times uniform on `[t_min, T]`.
pub fn uniform_times<R: Rng + ?Sized>(sde: &LinearSde, n: usize, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = (sde.t_min(), sde.horizon());
    (0..n)
        .map(|_| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

/// One perturbation draw per `(x0_i, t_i)` pair with targets `∇ log p_{t|0}` and
/// weights `λ(t_i)`; `x0` is row-major with `dim` columns.
pub fn dsm_batch<R: Rng + ?Sized>(
    sde: &LinearSde,
    x0: &[f64],
    dim: usize,
    times: &[f64],
    weighting: Weighting,
    rng: &mut R,
) -> Result<DsmBatch> {
    let n = x0.len() / dim;
    if n == 0 || x0.len() != n * dim {
        return Err(Error::InvalidArgument(
            "dataset must be a nonempty n × d array".into(),
        ));
    }
    if times.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} times for {n} data points",
            times.len()
        )));
    }
    let mut batch = DsmBatch::with_capacity(dim, n);
    for (xi, &t) in x0.chunks_exact(dim).zip(times) {
        let xt = sde.sample_transition(xi, t, rng)?;
        let target = sde.perturbation_score(xi, &xt, t)?;
        batch.push(&xt, t, &target, sde.weight(weighting, t, dim)?);
    }
    Ok(batch)
}

/// Empirical DSM loss `(1/n) Σ λ(t_i) ‖s(x_i(t_i), t_i) - ∇ log p_{t_i|0}‖²` with
/// perturbation draws fixed by `noise_seed`.
pub fn dsm_empirical(
    model: &ScoreModel,
    sde: &LinearSde,
    x0: &[f64],
    times: &[f64],
    weighting: Weighting,
    noise_seed: u64,
) -> Result<LossReport> {
    let batch = dsm_batch(
        sde,
        x0,
        model.dim(),
        times,
        weighting,
        &mut rng_from_seed(noise_seed),
    )?;
    let (value, stderr) = mean_and_stderr(&model.dsm_terms(&batch));
    Ok(LossReport {
        value,
        stderr,
        n_time_samples: times.len(),
        n_space_samples: batch.len(),
        seed: Some(noise_seed),
    })
}

/// A one-dimensional score field evaluated on many points at a shared time.
pub trait GridScore {
    fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64>;
}

impl GridScore for ScoreModel {
    fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        ScoreModel::score_on_grid(self, xs, t)
    }
}

impl GridScore for MarginalScore<'_> {
    fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        let pt = self.at(t);
        xs.iter().map(|&x| pt.score(x)).collect()
    }
}

impl<F: Fn(f64, f64) -> f64> GridScore for F {
    fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        xs.iter().map(|&x| self(x, t)).collect()
    }
}

/// Quadrature nodes for population losses: uniform times on `[t_min, T]`
/// (trapezoid weights) and a uniform space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmQuadrature {
    pub n_time: usize,
    pub grid: UniformGrid,
}

impl SmQuadrature {
    pub fn new(n_time: usize, grid: UniformGrid) -> Self {
        assert!(n_time >= 2, "time quadrature needs at least two nodes");
        Self { n_time, grid }
    }

    /// 64 time nodes on the mixture's coverage grid.
    pub fn standard(sde: &LinearSde, gm: &GaussianMixture) -> Self {
        Self::new(SM_TIME_NODES, gm.coverage_grid(sde))
    }

    pub fn times(&self, sde: &LinearSde) -> Vec<f64> {
        let (lo, hi) = (sde.t_min(), sde.horizon());
        (0..self.n_time)
            .map(|i| {
                if i + 1 == self.n_time {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (self.n_time - 1) as f64
                }
            })
            .collect()
    }

    /// Trapezoid weights normalized to sum to one, so the time integral is an average.
    pub fn time_weights(&self) -> Vec<f64> {
        let k = (self.n_time - 1) as f64;
        (0..self.n_time)
            .map(|i| {
                if i == 0 || i + 1 == self.n_time {
                    0.5 / k
                } else {
                    1.0 / k
                }
            })
            .collect()
    }
}

/// `p_t` on the grid; errors when more than [`GRID_MASS_TOLERANCE`] of it is missing.
fn marginal_on_grid(
    gm: &GaussianMixture,
    sde: &LinearSde,
    t: f64,
    xs: &[f64],
    h: f64,
) -> Result<(GaussianMixture, Vec<f64>)> {
    let pt = gm.perturbed(sde, t)?;
    let dens: Vec<f64> = xs.iter().map(|&x| pt.density(x)).collect();
    let deficit = (1.0 - trapezoid(&dens, h)).abs();
    if deficit > GRID_MASS_TOLERANCE {
        return Err(Error::GridCoverage { deficit });
    }
    Ok((pt, dens))
}

/// `λ(t) ∫ p_t(x) (s(x, t) - ∇ log p_t(x))² dx` at a single time (1-D).
pub fn sm_at_time<S: GridScore + ?Sized>(
    model: &S,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
    t: f64,
    grid: &UniformGrid,
) -> Result<f64> {
    let xs = grid.points();
    let h = grid.spacing();
    let (pt, dens) = marginal_on_grid(gm, sde, t, &xs, h)?;
    let s = model.score_on_grid(&xs, t);
    let integrand: Vec<f64> = xs
        .iter()
        .zip(&s)
        .zip(&dens)
        .map(|((&x, &si), &p)| {
            let r = si - pt.score(x);
            p * r * r
        })
        .collect();
    Ok(sde.weight(weighting, t, 1)? * trapezoid(&integrand, h))
}

/// Population score-matching loss
/// `E_{t~U(t_min,T)} λ(t) E_{p_t} (s(x,t) - ∇ log p_t(x))²` by quadrature, in absolute
/// terms (the analytic marginal score supplies the usual unknown constant).
pub fn sm_population<S: GridScore + ?Sized>(
    model: &S,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
    quad: &SmQuadrature,
) -> Result<LossReport> {
    let times = quad.times(sde);
    let per_time = times
        .iter()
        .map(|&t| sm_at_time(model, sde, gm, weighting, t, &quad.grid))
        .collect::<Result<Vec<f64>>>()?;
    let weighted: Vec<f64> = per_time
        .iter()
        .zip(quad.time_weights())
        .map(|(v, w)| v * w)
        .collect();
    Ok(LossReport {
        value: pairwise_sum(&weighted),
        stderr: 0.0,
        n_time_samples: quad.n_time,
        n_space_samples: quad.grid.n,
        seed: None,
    })
}

/// Draws `(t, x(t))` with `t ~ U(t_min, T)` and `x(t) ~ p_t` exactly.
fn marginal_draws(
    sde: &LinearSde,
    gm: &GaussianMixture,
    n: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let mut rng = rng_from_seed(seed);
    let times = uniform_times(sde, n, &mut rng);
    times
        .into_iter()
        .map(|t| {
            let x0 = gm.sample_point(&mut rng);
            Ok((t, sde.sample_transition(&[x0], t, &mut rng)?[0]))
        })
        .collect()
}

/// Monte-Carlo estimate of the population SM loss over `n_mc` draws `(t, x(t))`.
pub fn sm_monte_carlo(
    model: &ScoreModel,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
    n_mc: usize,
    seed: u64,
) -> Result<LossReport> {
    let draws = marginal_draws(sde, gm, n_mc, seed)?;
    let truth = gm.marginal_score(sde);
    let terms = draws
        .iter()
        .map(|&(t, x)| {
            let r = GridScore::score_on_grid(model, &[x], t)[0]
                - GridScore::score_on_grid(&truth, &[x], t)[0];
            Ok(sde.weight(weighting, t, 1)? * r * r)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (value, stderr) = mean_and_stderr(&terms);
    Ok(LossReport {
        value,
        stderr,
        n_time_samples: n_mc,
        n_space_samples: n_mc,
        seed: Some(seed),
    })
}

/// Population loss of a random-feature net as a quadratic in `A`:
/// `L(A) = (1/m) tr(Aᵀ A B1) - (2/√m) tr(A B2) + constant`, with
/// `B1 = E[h₁h₁ᵀ]`, `B2 = E[h₁h₂ᵀ]`, `h₁ = √(λ/m) σ(Wx + Ue(t))`, `h₂ = √λ ∇ log p_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    /// m × m.
    pub b1: DMatrix<f64>,
    /// m × d.
    pub b2: DMatrix<f64>,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn width(&self) -> usize {
        self.b1.nrows()
    }

    fn a_matrix(&self, a: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.b2.ncols(), self.width(), a)
    }

    /// Loss at the flat row-major `A` (d × m).
    pub fn loss(&self, a: &[f64]) -> f64 {
        let m = self.width() as f64;
        let am = self.a_matrix(a);
        let quad = (&am * &self.b1).component_mul(&am).sum() / m;
        let lin = (&am * &self.b2).trace() * 2.0 / m.sqrt();
        quad - lin + self.constant
    }

    /// `∇_A L = (2/m) A B1 - (2/√m) B2ᵀ`, flattened row-major.
    pub fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let m = self.width() as f64;
        let am = self.a_matrix(a);
        let g = &am * &self.b1 * (2.0 / m) - self.b2.transpose() * (2.0 / m.sqrt());
        g.transpose().as_slice().to_vec()
    }

    /// `A* = √m B2ᵀ (B1 + ridge I)⁻¹`, flattened row-major.
    pub fn optimum(&self, ridge: f64) -> Result<Vec<f64>> {
        let m = self.width();
        let reg = &self.b1 + DMatrix::identity(m, m) * ridge;
        let chol = reg
            .cholesky()
            .ok_or_else(|| Error::NonFinite("B1 + ridge is not positive definite".into()))?;
        let x = chol.solve(&self.b2) * (m as f64).sqrt();
        // x is m × d; A = xᵀ (d × m), row-major = column-major of x.
        Ok(x.as_slice().to_vec())
    }

    /// Eigen-decomposition of `B1`.
    pub fn b1_eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.b1.clone())
    }

    /// Largest eigenvalue of the Hessian of `L` per output row, `2 λ_max(B1) / m`.
    pub fn hessian_max_eig(&self) -> f64 {
        let top = self
            .b1_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        2.0 * top / self.width() as f64
    }

    /// Exact solution of the gradient flow `dA/dτ = -∇L(A)` at time `tau` from `a0`.
    pub fn gradient_flow(&self, a0: &[f64], tau: f64) -> Vec<f64> {
        let m = self.width();
        let d = self.b2.ncols();
        let mf = m as f64;
        let eig = self.b1_eigen();
        let q = &eig.eigenvectors;
        // Per output row k: a_k(τ) in B1's eigenbasis decouples into scalar ODEs
        // c' = -(2/m) μ c + (2/√m) β with c = Qᵀ a_k, β = Qᵀ b2_k.
        let a0m = self.a_matrix(a0);
        let mut out = DMatrix::<f64>::zeros(d, m);
        for k in 0..d {
            let c0 = q.transpose() * a0m.row(k).transpose();
            let beta = q.transpose() * self.b2.column(k);
            let mut c = DVector::<f64>::zeros(m);
            for j in 0..m {
                let rate = 2.0 * eig.eigenvalues[j].max(0.0) / mf;
                let drive = 2.0 * beta[j] / mf.sqrt();
                c[j] = if rate * tau < 1e-12 {
                    c0[j] + drive * tau
                } else {
                    let decay = (-rate * tau).exp();
                    c0[j] * decay + drive / rate * (1.0 - decay)
                };
            }
            out.set_row(k, &(q * c).transpose());
        }
        out.transpose().as_slice().to_vec()
    }
}

/// Accumulates `h₁h₁ᵀ` and `h₁h₂ᵀ` for 1-D points with quadrature or sample weights.
struct GramAccumulator {
    m: usize,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    constant: f64,
}

impl GramAccumulator {
    fn new(m: usize) -> Self {
        Self {
            m,
            b1: DMatrix::zeros(m, m),
            b2: DMatrix::zeros(m, 1),
            constant: 0.0,
        }
    }

    /// Adds `weight · (λ/m) φφᵀ`, `weight · (λ/√m) φ s*` and `weight · λ s*²`.
    fn add(&mut self, phi: &[f64], target: f64, lambda: f64, weight: f64) {
        let mf = self.m as f64;
        let c1 = weight * lambda / mf;
        let c2 = weight * lambda / mf.sqrt() * target;
        let active: Vec<(usize, f64)> = phi
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect();
        for &(i, pi) in &active {
            let ci = c1 * pi;
            for &(j, pj) in &active {
                if j >= i {
                    self.b1[(i, j)] += ci * pj;
                }
            }
            self.b2[(i, 0)] += c2 * pi;
        }
        self.constant += weight * lambda * target * target;
    }

    fn finish(mut self) -> QuadraticForm {
        for i in 0..self.m {
            for j in 0..i {
                self.b1[(i, j)] = self.b1[(j, i)];
            }
        }
        QuadraticForm {
            b1: self.b1,
            b2: self.b2,
            constant: self.constant,
        }
    }
}

/// Monte-Carlo `B1`, `B2` and constant from `n_mc` draws `(t, x(t))`; drawing with the
/// same `seed` as [`sm_monte_carlo`] uses the identical sample points.
pub fn quadratic_coeffs(
    rf: &RandomFeatureNet,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
    n_mc: usize,
    seed: u64,
) -> Result<QuadraticForm> {
    if rf.dim() != 1 {
        return Err(Error::InvalidArgument(
            "quadratic coefficients are implemented for d = 1".into(),
        ));
    }
    let mut acc = GramAccumulator::new(rf.width());
    let w = 1.0 / n_mc as f64;
    for (t, x) in marginal_draws(sde, gm, n_mc, seed)? {
        let target = gm.perturbed(sde, t)?.score(x);
        acc.add(
            &rf.features(&[x], t),
            target,
            sde.weight(weighting, t, 1)?,
            w,
        );
    }
    Ok(acc.finish())
}

/// `B1`, `B2` and constant on the same quadrature nodes as [`sm_population`], so that
/// `QuadraticForm::loss` reproduces it up to rounding. Grid points where `p_t` is
/// below `1e-16` of its peak are skipped.
pub fn quadratic_coeffs_quadrature(
    rf: &RandomFeatureNet,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
    quad: &SmQuadrature,
) -> Result<QuadraticForm> {
    if rf.dim() != 1 {
        return Err(Error::InvalidArgument(
            "quadratic coefficients are implemented for d = 1".into(),
        ));
    }
    let xs = quad.grid.points();
    let h = quad.grid.spacing();
    let mut acc = GramAccumulator::new(rf.width());
    for (t, wt) in quad.times(sde).into_iter().zip(quad.time_weights()) {
        let (pt, dens) = marginal_on_grid(gm, sde, t, &xs, h)?;
        let lambda = sde.weight(weighting, t, 1)?;
        let peak = dens.iter().copied().fold(0.0, f64::max);
        let offsets = rf.time_offsets(t);
        let mut phi = vec![0.0; rf.width()];
        for (j, (&x, &p)) in xs.iter().zip(&dens).enumerate() {
            if p < 1e-16 * peak {
                continue;
            }
            let edge = if j == 0 || j + 1 == xs.len() {
                0.5
            } else {
                1.0
            };
            rf.preactivations_with(&[x], &offsets, &mut phi);
            phi.iter_mut().for_each(|v| *v = v.max(0.0));
            acc.add(&phi, pt.score(x), lambda, wt * edge * h * p);
        }
    }
    Ok(acc.finish())
}
