//! One-dimensional densities on grids: reconstruction from a score, KL by
//! quadrature, probability-flow ODE likelihoods and sampling, and the prior gap.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::csvfmt::sig10;
use crate::objectives::GridScore;
use crate::quad::{cumulative_trapezoid, trapezoid, UniformGrid};
use crate::sde::{LinearSde, Samples, ScoreField};
use crate::targets::GaussianMixture;

/// Densities below this are clipped before taking logs.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Reference-density values below this are dropped from KL sums.
pub const KL_DROP_BELOW: f64 = 1e-15;
/// Largest reference mass tolerated where the other density sits at the floor.
pub const SUPPORT_TOLERANCE: f64 = 1e-6;
/// Default number of RK4 steps for the probability-flow ODE.
pub const ODE_STEPS: usize = 500;

/// A normalized density on a uniform 1-D grid, kept alongside its logarithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
}

impl DensityGrid {
    /// Normalizes `exp(log_unnormalized)` by the trapezoid rule, subtracting the
    /// maximum first so the exponentials cannot overflow.
    pub fn from_log_unnormalized(grid: UniformGrid, mut log_values: Vec<f64>) -> Result<Self> {
        assert_eq!(log_values.len(), grid.n);
        if let Some(j) = log_values
            .iter()
            .position(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return Err(Error::NonFinite(format!(
                "log-density is {} at x = {}",
                log_values[j],
                grid.point(j)
            )));
        }
        let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateDensity);
        }
        log_values.iter_mut().for_each(|v| *v -= max);
        let unnorm: Vec<f64> = log_values.iter().map(|v| v.exp()).collect();
        let mass = trapezoid(&unnorm, grid.spacing());
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        let log_mass = mass.ln();
        log_values.iter_mut().for_each(|v| *v -= log_mass);
        let values = unnorm.iter().map(|v| v / mass).collect();
        Ok(Self {
            grid,
            values,
            log_values,
        })
    }

    /// Tabulates `log_density` and renormalizes on the grid.
    pub fn from_log_fn<F: Fn(f64) -> f64>(grid: UniformGrid, log_density: F) -> Result<Self> {
        Self::from_log_unnormalized(grid, grid.points().into_iter().map(log_density).collect())
    }

    pub fn mixture(gm: &GaussianMixture, grid: UniformGrid) -> Result<Self> {
        Self::from_log_fn(grid, |x| gm.log_density(x))
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing())
    }

    pub fn mean(&self) -> f64 {
        let xm: Vec<f64> = self
            .grid
            .points()
            .iter()
            .zip(&self.values)
            .map(|(x, p)| x * p)
            .collect();
        trapezoid(&xm, self.grid.spacing())
    }

    /// Two-column `x,p` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,p")?;
        for (x, p) in self.grid.points().iter().zip(&self.values) {
            writeln!(out, "{},{}", sig10(*x), sig10(*p))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Density whose log-derivative is the given score: cumulative trapezoid of the
/// score values (one per grid point) from the left edge, then exponentiate and
/// normalize.
pub fn density_from_score(scores: &[f64], grid: UniformGrid) -> Result<DensityGrid> {
    if scores.len() != grid.n {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} grid points",
            scores.len(),
            grid.n
        )));
    }
    if let Some(j) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!(
            "score is {} at x = {}",
            scores[j],
            grid.point(j)
        )));
    }
    DensityGrid::from_log_unnormalized(grid, cumulative_trapezoid(scores, grid.spacing()))
}

/// `∫ p log(p/q)` by the trapezoid rule on a shared grid. `q` is floored at
/// [`DENSITY_FLOOR`], grid points with `p <` [`KL_DROP_BELOW`] are dropped, and a
/// support error is raised when more than [`SUPPORT_TOLERANCE`] of `p`'s mass sits
/// where `q` is floored.
pub fn kl_quadrature(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    if p.grid != q.grid {
        return Err(Error::InvalidArgument(
            "KL requires densities on the same grid".into(),
        ));
    }
    let floor = DENSITY_FLOOR.ln();
    let h = p.grid.spacing();
    let mut orphan = vec![0.0; p.grid.n];
    let integrand: Vec<f64> = p
        .values
        .iter()
        .zip(&p.log_values)
        .zip(&q.log_values)
        .enumerate()
        .map(|(j, ((&pj, &lp), &lq))| {
            if pj < KL_DROP_BELOW {
                return 0.0;
            }
            if lq < floor {
                orphan[j] = pj;
            }
            pj * (lp - lq.max(floor))
        })
        .collect();
    let orphan_mass = trapezoid(&orphan, h);
    if orphan_mass > SUPPORT_TOLERANCE {
        return Err(Error::Support { mass: orphan_mass });
    }
    Ok(trapezoid(&integrand, h))
}

/// `KL(p₀ ‖ q)` where `q` is the density reconstructed from the model's score at
/// `t_min` (the model is not defined at `t = 0`).
pub fn model_kl<S: GridScore + ?Sized>(
    model: &S,
    sde: &LinearSde,
    gm: &GaussianMixture,
    grid: UniformGrid,
) -> Result<f64> {
    let target = DensityGrid::mixture(gm, grid)?;
    let learned = model_density(model, sde, grid)?;
    kl_quadrature(&target, &learned)
}

/// Density reconstructed from the model's score at `t_min`.
pub fn model_density<S: GridScore + ?Sized>(
    model: &S,
    sde: &LinearSde,
    grid: UniformGrid,
) -> Result<DensityGrid> {
    density_from_score(&model.score_on_grid(&grid.points(), sde.t_min()), grid)
}

/// `KL(p_T ‖ π)` on the grid.
pub fn kl_prior_gap(gm: &GaussianMixture, sde: &LinearSde, grid: UniformGrid) -> Result<f64> {
    let pt = gm.perturbed(sde, sde.horizon())?;
    let prior = sde.prior();
    let p = DensityGrid::mixture(&pt, grid)?;
    let q = DensityGrid::from_log_fn(grid, |x| prior.log_density(&[x]))?;
    kl_quadrature(&p, &q)
}

/// Probability-flow velocity `f(t) x - ½ g(t)² s(x, t)` and its divergence.
fn flow<S: ScoreField + ?Sized>(
    sde: &LinearSde,
    score: &S,
    x: &[f64],
    t: f64,
    v: &mut [f64],
) -> f64 {
    let (f, g2) = (sde.drift(t), sde.diffusion(t).powi(2));
    score.score_into(x, t, v);
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi = f * xi - 0.5 * g2 * *vi;
    }
    f * x.len() as f64 - 0.5 * g2 * score.divergence(x, t)
}

/// One RK4 step of the probability-flow ODE with step `h` (negative to go
/// backwards); returns the step's increment of `∫ div v dt`.
fn rk4_step<S: ScoreField + ?Sized>(
    sde: &LinearSde,
    score: &S,
    x: &mut [f64],
    t: f64,
    h: f64,
) -> Result<f64> {
    let d = x.len();
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut div = [0.0; 4];
    let mut tmp = vec![0.0; d];
    let stages = [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)];
    for s in 0..4 {
        let (cx, ct) = stages[s];
        if s == 0 {
            tmp.copy_from_slice(x);
        } else {
            for i in 0..d {
                tmp[i] = x[i] + cx * h * k[s - 1][i];
            }
        }
        div[s] = flow(sde, score, &tmp, t + ct * h, &mut k[s]);
    }
    for i in 0..d {
        x[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
    let inc = h / 6.0 * (div[0] + 2.0 * div[1] + 2.0 * div[2] + div[3]);
    if x.iter().any(|v| !v.is_finite()) || !inc.is_finite() {
        return Err(Error::Blowup {
            t: t + h,
            detail: format!("probability-flow state became {x:?}"),
        });
    }
    Ok(inc)
}

/// `log p_{t_min}(x)` under the model: integrate the probability-flow ODE from
/// `t_min` to `T` with RK4 while accumulating `∫ div v dt`, then add `log π(x(T))`.
pub fn ode_loglik<S: ScoreField + ?Sized>(
    score: &S,
    sde: &LinearSde,
    x: &[f64],
    n_steps: usize,
) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let t0 = sde.t_min();
    let h = (sde.horizon() - t0) / n_steps as f64;
    let mut state = x.to_vec();
    let mut correction = 0.0;
    for k in 0..n_steps {
        correction += rk4_step(sde, score, &mut state, t0 + k as f64 * h, h)?;
    }
    Ok(sde.prior().log_density(&state) + correction)
}

/// Samples by integrating the probability-flow ODE backwards from `x(T) ~ π` to `t_min`.
pub fn ode_sample<S, R>(
    score: &S,
    sde: &LinearSde,
    n_samples: usize,
    n_steps: usize,
    rng: &mut R,
) -> Result<Samples>
where
    S: ScoreField + ?Sized,
    R: Rng + ?Sized,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let d = score.dim();
    let prior = sde.prior();
    let h = (sde.horizon() - sde.t_min()) / n_steps as f64;
    let mut data = Vec::with_capacity(n_samples * d);
    for _ in 0..n_samples {
        let mut x = prior.sample(d, rng);
        for k in 0..n_steps {
            rk4_step(sde, score, &mut x, sde.horizon() - k as f64 * h, -h)?;
        }
        data.extend_from_slice(&x);
    }
    Ok(Samples { dim: d, data })
}

/// Two-component Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentFit {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
}

impl TwoComponentFit {
    pub fn dominant_weight(&self) -> f64 {
        self.weights[0].max(self.weights[1])
    }
}

/// Weighted EM for a two-component Gaussian mixture; `points` carry nonnegative
/// `masses` (sample counts, or density times quadrature weight). Components start at
/// `init_means` with unit variance and equal weights.
pub fn fit_two_component(
    points: &[f64],
    masses: &[f64],
    init_means: [f64; 2],
    iterations: usize,
) -> TwoComponentFit {
    const MIN_VAR: f64 = 1e-6;
    let total: f64 = masses.iter().sum();
    let mut fit = TwoComponentFit {
        weights: [0.5, 0.5],
        means: init_means,
        variances: [1.0, 1.0],
    };
    let mut resp = vec![0.0; points.len()];
    for _ in 0..iterations {
        for (r, &x) in resp.iter_mut().zip(points) {
            let l: [f64; 2] = std::array::from_fn(|k| {
                fit.weights[k].max(1e-300).ln()
                    - 0.5 * fit.variances[k].ln()
                    - 0.5 * (x - fit.means[k]).powi(2) / fit.variances[k]
            });
            *r = 1.0 / (1.0 + (l[1] - l[0]).exp());
        }
        for k in 0..2 {
            let rk = |i: usize| if k == 0 { resp[i] } else { 1.0 - resp[i] } * masses[i];
            let nk: f64 = (0..points.len()).map(rk).sum();
            fit.weights[k] = nk / total;
            if nk <= 1e-300 {
                continue;
            }
            let mean = (0..points.len()).map(|i| rk(i) * points[i]).sum::<f64>() / nk;
            let var = (0..points.len())
                .map(|i| rk(i) * (points[i] - mean).powi(2))
                .sum::<f64>()
                / nk;
            fit.means[k] = mean;
            fit.variances[k] = var.max(MIN_VAR);
        }
    }
    fit
}

/// EM fit to a grid density, with trapezoid masses.
pub fn fit_two_component_density(
    p: &DensityGrid,
    init_means: [f64; 2],
    iterations: usize,
) -> TwoComponentFit {
    let h = p.grid.spacing();
    let n = p.grid.n;
    let masses: Vec<f64> = p
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| v * h * if j == 0 || j + 1 == n { 0.5 } else { 1.0 })
        .collect();
    fit_two_component(&p.grid.points(), &masses, init_means, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::FnScore;
    use crate::seed::rng_from_seed;

    fn grid() -> UniformGrid {
        UniformGrid::new(-13.0, 13.0, 4096)
    }

    #[test]
    fn gaussian_scores_give_gaussian_densities() {
        let g = grid();
        for shift in [0.0, 2.0] {
            let s: Vec<f64> = g.points().iter().map(|x| -(x - shift)).collect();
            let p = density_from_score(&s, g).unwrap();
            let target = GaussianMixture::single(shift, 1.0).unwrap();
            let err = g
                .points()
                .iter()
                .zip(&p.values)
                .map(|(x, v)| (v - target.density(*x)).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "max error {err}");
            assert!((p.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_score_reconstructs_mixture_density() {
        let g = grid();
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let s: Vec<f64> = g.points().iter().map(|&x| gm.score(x)).collect();
        let p = density_from_score(&s, g).unwrap();
        let l1: Vec<f64> = g
            .points()
            .iter()
            .zip(&p.values)
            .map(|(x, v)| (v - gm.density(*x)).abs())
            .collect();
        assert!(trapezoid(&l1, g.spacing()) < 1e-6);
    }

    #[test]
    fn gaussian_kl_closed_forms() {
        let g = UniformGrid::new(-20.0, 20.0, 8192);
        let n = |mu: f64, var: f64| {
            DensityGrid::mixture(&GaussianMixture::single(mu, var).unwrap(), g).unwrap()
        };
        assert!(kl_quadrature(&n(0.0, 1.0), &n(0.0, 1.0)).unwrap().abs() < 1e-10);
        assert!((kl_quadrature(&n(0.0, 1.0), &n(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-6);
        let expected = 0.5 * 4f64.ln() + 1.0 / 8.0 - 0.5;
        assert!((kl_quadrature(&n(0.0, 1.0), &n(0.0, 4.0)).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn disjoint_support_is_an_error() {
        let g = UniformGrid::new(-40.0, 40.0, 4096);
        let p = DensityGrid::mixture(&GaussianMixture::single(-30.0, 0.01).unwrap(), g).unwrap();
        let q = DensityGrid::mixture(&GaussianMixture::single(30.0, 0.01).unwrap(), g).unwrap();
        assert!(matches!(kl_quadrature(&p, &q), Err(Error::Support { .. })));
    }

    #[test]
    fn model_kl_examples() {
        let sde = LinearSde::ou(3.0).unwrap();
        let g = grid();
        let target = GaussianMixture::single(1.0, 1.0).unwrap();
        let std_score = |x: f64, _t: f64| -x;
        assert!((model_kl(&std_score, &sde, &target, g).unwrap() - 0.5).abs() < 1e-6);
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let exact = |x: f64, _t: f64| gm.score(x);
        assert!(model_kl(&exact, &sde, &gm, g).unwrap() < 1e-8);
        // zero score: uniform density on the grid, KL = ∫ p log p + log(length)
        let zero = |_: f64, _: f64| 0.0;
        let neg_entropy: Vec<f64> = g
            .points()
            .iter()
            .map(|&x| gm.density(x) * gm.log_density(x))
            .collect();
        let expected = trapezoid(&neg_entropy, g.spacing()) + g.length().ln();
        assert!((model_kl(&zero, &sde, &gm, g).unwrap() - expected).abs() < 1e-4);
    }

    #[test]
    fn prior_gap_examples() {
        let g = UniformGrid::new(-15.0, 15.0, 4096);
        let std = GaussianMixture::single(0.0, 1.0).unwrap();
        assert!(
            kl_prior_gap(&std, &LinearSde::ou(2.0).unwrap(), g)
                .unwrap()
                .abs()
                < 1e-10
        );
        let shifted = GaussianMixture::single(3.0, 1.0).unwrap();
        let expected = (3.0 * (-3f64).exp()).powi(2) / 2.0;
        assert!(
            (kl_prior_gap(&shifted, &LinearSde::ou(3.0).unwrap(), g).unwrap() - expected).abs()
                < 1e-8
        );
        let gaps: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&t| kl_prior_gap(&shifted, &LinearSde::ou(t).unwrap(), g).unwrap())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn stationary_flow_likelihood() {
        let sde = LinearSde::ou(3.0).unwrap();
        let s = FnScore::new(
            1,
            |x: &[f64], _t: f64, out: &mut [f64]| out[0] = -x[0],
            |_x: &[f64], _t: f64| -1.0,
        );
        let ll = ode_loglik(&s, &sde, &[0.7], ODE_STEPS).unwrap();
        let exact = -0.5 * 0.49 - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((ll - exact).abs() < 1e-12);
    }

    #[test]
    fn mixture_likelihood_matches_marginal_density() {
        // A long horizon makes p_T indistinguishable from π; the flow then recovers
        // log p_{t_min} exactly up to RK4 error.
        let sde = LinearSde::ou(12.0).unwrap();
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let truth = gm.marginal_score(&sde);
        let p_tmin = gm.perturbed(&sde, sde.t_min()).unwrap();
        for i in 0..10 {
            let x = -4.5 + i as f64;
            let ll = ode_loglik(&truth, &sde, &[x], 2000).unwrap();
            assert!(
                (ll - p_tmin.log_density(x)).abs() < 1e-3,
                "x = {x}: {ll} vs {}",
                p_tmin.log_density(x)
            );
        }
    }

    #[test]
    fn rk4_error_shrinks_at_fourth_order() {
        let sde = LinearSde::ou(3.0).unwrap();
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let truth = gm.marginal_score(&sde);
        let x = [1.3];
        let reference = ode_loglik(&truth, &sde, &x, 16_000).unwrap();
        let e1 = (ode_loglik(&truth, &sde, &x, 500).unwrap() - reference).abs();
        let e2 = (ode_loglik(&truth, &sde, &x, 1000).unwrap() - reference).abs();
        let ratio = e1 / e2;
        assert!(
            (10.0..24.0).contains(&ratio),
            "ratio {ratio} ({e1:e} / {e2:e})"
        );
    }

    #[test]
    fn flow_sampling_examples() {
        let sde = LinearSde::ou(3.0).unwrap();
        let s = FnScore::new(
            1,
            |x: &[f64], _t: f64, out: &mut [f64]| out[0] = -x[0],
            |_x: &[f64], _t: f64| -1.0,
        );
        let samples = ode_sample(&s, &sde, 20_000, 50, &mut rng_from_seed(1)).unwrap();
        let xs = samples.first_coords();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var - 1.0).abs() < 0.04);

        let ve = LinearSde::ve_constant(1.0, 2.0).unwrap();
        let zero = FnScore::new(
            1,
            |_x: &[f64], _t: f64, out: &mut [f64]| out[0] = 0.0,
            |_x: &[f64], _t: f64| 0.0,
        );
        let drawn = ode_sample(&zero, &ve, 10, 20, &mut rng_from_seed(4)).unwrap();
        let mut rng = rng_from_seed(4);
        let prior: Vec<f64> = (0..10).map(|_| ve.prior().sample(1, &mut rng)[0]).collect();
        assert_eq!(drawn.first_coords(), prior);
    }

    #[test]
    fn mixture_flow_samples_recover_modes() {
        let sde = LinearSde::ou(6.0).unwrap();
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let truth = gm.marginal_score(&sde);
        let samples = ode_sample(&truth, &sde, 4000, 200, &mut rng_from_seed(2)).unwrap();
        let xs = samples.first_coords();
        let fit = fit_two_component(&xs, &vec![1.0; xs.len()], [-1.0, 1.0], 200);
        let (lo, hi) = (
            fit.means[0].min(fit.means[1]),
            fit.means[0].max(fit.means[1]),
        );
        assert!((lo + 3.0).abs() < 0.1 && (hi - 3.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn em_recovers_unbalanced_weights_on_grid() {
        let gm = GaussianMixture::new(vec![
            crate::targets::Component {
                weight: 0.9,
                mean: 15.0,
                variance: 1.0,
            },
            crate::targets::Component {
                weight: 0.1,
                mean: -15.0,
                variance: 1.0,
            },
        ])
        .unwrap();
        let p = DensityGrid::mixture(&gm, gm.standard_grid()).unwrap();
        let fit = fit_two_component_density(&p, [-15.0, 15.0], 100);
        assert!((fit.dominant_weight() - 0.9).abs() < 1e-6);
    }
}
