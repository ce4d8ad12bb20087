//! Numerical properties checked by `sgl verify` and the acceptance suite. Each
//! check returns the measured value, the bound it is held to, and the verdict.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::csvfmt::sig10;
use crate::density::{
    density_from_score, kl_prior_gap, kl_quadrature, model_kl, ode_loglik, DensityGrid,
};
use crate::error::Result;
use crate::objectives::{
    quadratic_coeffs_quadrature, sm_population, uniform_times, GridScore, QuadraticForm,
    SmQuadrature, OPTIMUM_RIDGE,
};
use crate::quad::{loglog_slope, mean_and_stderr, trapezoid, UniformGrid};
use crate::score_net::{DsmBatch, RandomFeatureNet, ScoreModel, TimeEmbedding};
use crate::sde::{LinearSde, Weighting};
use crate::seed::{rng_from_seed, split_seed};
use crate::targets::GaussianMixture;
use crate::theory::{
    mc_gap_estimate, optimal_tau, score_error_coverage, single_mode_bound, tau_es, BoundConstants,
    McGap,
};

use super::config::McGapSpec;

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition on `value`, e.g. `<= 1e-3`.
    pub bound: String,
    pub pass: bool,
}

impl PropertyResult {
    pub const CSV_HEADER: &'static str = "name,value,bound,pass";

    /// Passes when `value <= bound`; NaN fails.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("<= {bound:e}"),
            pass: value <= bound,
        }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!(">= {bound:e}"),
            pass: value >= bound,
        }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.name,
            sig10(self.value),
            self.bound,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

/// OU process on `[0, 3]` and the symmetric mixture `½N(−3, 1) + ½N(3, 1)`, the
/// default setting of every check.
pub fn reference_setting() -> (LinearSde, GaussianMixture) {
    (
        LinearSde::ou(3.0).expect("valid horizon"),
        GaussianMixture::symmetric(3.0, 1.0).expect("valid mixture"),
    )
}

fn random_rf(m: usize, horizon: f64, scale: f64, seed: u64) -> RandomFeatureNet {
    let mut rf = RandomFeatureNet::new(
        1,
        m,
        TimeEmbedding::new(TimeEmbedding::DEFAULT_DIM, horizon),
        seed,
    );
    let mut rng = rng_from_seed(split_seed(seed, 1));
    let a: Vec<f64> = (0..m)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    rf.set_a(&a);
    rf
}

/// The model's score with its sign flipped.
struct Negated<'a>(&'a ScoreModel);

impl GridScore for Negated<'_> {
    fn score_on_grid(&self, xs: &[f64], t: f64) -> Vec<f64> {
        self.0
            .score_on_grid(xs, t)
            .into_iter()
            .map(|s| -s)
            .collect()
    }
}

/// One random model of the KL inequality suite and its three terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlInequalityCase {
    pub width: usize,
    pub scale: f64,
    /// `+∞` when the reconstructed density has no usable KL (support mismatch).
    pub kl: f64,
    pub sm: f64,
    pub prior_gap: f64,
}

impl KlInequalityCase {
    pub fn excess(&self) -> f64 {
        self.kl - self.sm - self.prior_gap
    }
}

/// `KL(p₀ ‖ q_model)` against `SM(λ = g²) + KL(p_T ‖ π)` for random-feature models
/// with `A ~ N(0, s²)`, `s` log-uniform on `[0.1, 100]` and width drawn from
/// {16, 32, 64, 128}. With `sign_bug` the density is reconstructed from the negated
/// score while the loss still sees the true one.
pub fn kl_inequality_cases(
    n_models: usize,
    seed: u64,
    sign_bug: bool,
) -> Result<Vec<KlInequalityCase>> {
    let (sde, gm) = reference_setting();
    let quad = SmQuadrature::standard(&sde, &gm);
    let prior_gap = kl_prior_gap(&gm, &sde, gm.coverage_grid(&sde))?;
    let grid = gm.standard_grid();
    (0..n_models as u64)
        .map(|i| {
            let s = split_seed(seed, i);
            let mut rng = rng_from_seed(s);
            let width = [16, 32, 64, 128][rng.random_range(0..4)];
            let scale = 10f64.powf(rng.random_range(-1.0..2.0));
            let model = ScoreModel::RandomFeature(random_rf(width, sde.horizon(), scale, s));
            let kl = if sign_bug {
                model_kl(&Negated(&model), &sde, &gm, grid)
            } else {
                model_kl(&model, &sde, &gm, grid)
            }
            .unwrap_or(f64::INFINITY);
            let sm = sm_population(&model, &sde, &gm, Weighting::DiffusionSquared, &quad)?.value;
            Ok(KlInequalityCase {
                width,
                scale,
                kl,
                sm,
                prior_gap,
            })
        })
        .collect()
}

pub fn kl_inequality_check(n_models: usize, seed: u64, sign_bug: bool) -> Result<PropertyResult> {
    let worst = kl_inequality_cases(n_models, seed, sign_bug)?
        .iter()
        .map(KlInequalityCase::excess)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PropertyResult::at_most(
        "kl_below_sm_plus_prior_gap",
        worst,
        1e-3,
    ))
}

/// Largest relative error of the analytic DSM gradient against central differences.
pub fn gradient_error(model: &mut ScoreModel, batch: &DsmBatch) -> f64 {
    let grad = model.grad_dsm(batch);
    let loss = |m: &ScoreModel| crate::quad::pairwise_sum(&m.dsm_terms(batch)) / batch.len() as f64;
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for (i, &g) in grad.iter().enumerate() {
        let orig = model.params()[i];
        let h = 1e-5 * (1.0 + orig.abs());
        model.params_mut()[i] = orig + h;
        let lp = loss(model);
        model.params_mut()[i] = orig - h;
        let lm = loss(model);
        model.params_mut()[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((g - fd).abs() / fd.abs().max(1e-3 * gnorm).max(1e-12));
    }
    worst
}

fn data_batch(sde: &LinearSde, gm: &GaussianMixture, n: usize, seed: u64) -> Result<DsmBatch> {
    let data = gm.sample(n, seed)?;
    let mut rng = rng_from_seed(split_seed(seed, 1));
    let times = uniform_times(sde, n, &mut rng);
    crate::objectives::dsm_batch(sde, &data.samples, 1, &times, Weighting::Standard, &mut rng)
}

pub fn rf_gradient_check(seed: u64) -> Result<PropertyResult> {
    let (sde, gm) = reference_setting();
    let batch = data_batch(&sde, &gm, 64, seed)?;
    let mut model = ScoreModel::RandomFeature(random_rf(32, sde.horizon(), 1.0, seed));
    Ok(PropertyResult::at_most(
        "rf_gradient_rel_error",
        gradient_error(&mut model, &batch),
        1e-5,
    ))
}

pub fn swish_gradient_check(seed: u64) -> Result<PropertyResult> {
    let (sde, gm) = reference_setting();
    let batch = data_batch(&sde, &gm, 64, seed)?;
    let mut model = ScoreModel::swish(1, 16, TimeEmbedding::DEFAULT_DIM, sde.horizon(), seed);
    Ok(PropertyResult::at_most(
        "swish_gradient_rel_error",
        gradient_error(&mut model, &batch),
        1e-4,
    ))
}

/// L1 distance between the density rebuilt from the exact mixture score and the
/// analytic mixture density.
pub fn density_reconstruction_check() -> Result<PropertyResult> {
    let (_, gm) = reference_setting();
    let grid = gm.standard_grid();
    let xs = grid.points();
    let scores: Vec<f64> = xs.iter().map(|&x| gm.score(x)).collect();
    let p = density_from_score(&scores, grid)?;
    let diff: Vec<f64> = xs
        .iter()
        .zip(&p.values)
        .map(|(&x, v)| (v - gm.density(x)).abs())
        .collect();
    Ok(PropertyResult::at_most(
        "density_from_score_l1",
        trapezoid(&diff, grid.spacing()),
        1e-6,
    ))
}

/// Probability-flow log-likelihood with the exact marginal score against the
/// analytic `log p_{t_min}`. The horizon is long enough that `p_T` matches the prior
/// to rounding, so the flow is exact up to integration error.
pub fn ode_loglik_check() -> Result<PropertyResult> {
    let (_, gm) = reference_setting();
    let sde = LinearSde::ou(12.0)?;
    let truth = gm.marginal_score(&sde);
    let p0 = gm.perturbed(&sde, sde.t_min())?;
    let mut worst = 0.0f64;
    for x in [-5.0, -3.0, -1.0, 0.0, 0.5, 3.0, 4.5] {
        let ll = ode_loglik(&truth, &sde, &[x], 2000)?;
        worst = worst.max((ll - p0.log_density(x)).abs());
    }
    Ok(PropertyResult::at_most("ode_loglik_abs_error", worst, 1e-3))
}

/// Grid KL between Gaussians against the closed form
/// `½[log(σ₂²/σ₁²) + (σ₁² + (μ₁−μ₂)²)/σ₂² − 1]`.
pub fn gaussian_kl_check() -> Result<PropertyResult> {
    let grid = UniformGrid::new(-20.0, 20.0, 8192);
    let mut worst = 0.0f64;
    for (m1, v1, m2, v2) in [
        (0.0, 1.0, 0.0, 1.0),
        (0.0, 1.0, 1.0, 1.0),
        (0.0, 1.0, 0.0, 4.0),
        (-1.0, 0.5, 2.0, 3.0),
    ] {
        let p = DensityGrid::mixture(&GaussianMixture::single(m1, v1)?, grid)?;
        let q = DensityGrid::mixture(&GaussianMixture::single(m2, v2)?, grid)?;
        let exact = 0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
        worst = worst.max((kl_quadrature(&p, &q)? - exact).abs());
    }
    Ok(PropertyResult::at_most(
        "gaussian_kl_abs_error",
        worst,
        1e-6,
    ))
}

/// DSM and SM differ by a model-independent constant: on paired draws, the
/// difference `(DSM_A − DSM_B) − (SM_A − SM_B)` has mean zero. Reports `|mean|/SE`.
pub fn dsm_sm_offset_check(n_draws: usize, seed: u64) -> Result<PropertyResult> {
    let (sde, gm) = reference_setting();
    let marginal = gm.marginal_score(&sde);
    let a = ScoreModel::RandomFeature(random_rf(32, sde.horizon(), 1.0, split_seed(seed, 0)));
    let b = ScoreModel::RandomFeature(random_rf(32, sde.horizon(), 3.0, split_seed(seed, 1)));
    let mut rng = rng_from_seed(split_seed(seed, 2));
    let times = uniform_times(&sde, n_draws, &mut rng);
    let terms = times
        .iter()
        .map(|&t| {
            let x0 = gm.sample_point(&mut rng);
            let xt = sde.sample_transition(&[x0], t, &mut rng)?;
            let y = sde.perturbation_score(&[x0], &xt, t)?[0];
            let truth = marginal.at(t).score(xt[0]);
            let sa = a.score_on_grid(&xt, t)[0];
            let sb = b.score_on_grid(&xt, t)[0];
            let lambda = sde.weight(Weighting::Standard, t, 1)?;
            let dsm = (sa - y).powi(2) - (sb - y).powi(2);
            let sm = (sa - truth).powi(2) - (sb - truth).powi(2);
            Ok(lambda * (dsm - sm))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_and_stderr(&terms);
    Ok(PropertyResult::at_most(
        "dsm_minus_sm_offset_z",
        mean.abs() / se,
        4.0,
    ))
}

/// `SM((A+B)/2) ≤ (SM(A) + SM(B))/2` for random-feature coefficients sharing features.
pub fn convexity_check(n_pairs: usize, seed: u64) -> Result<PropertyResult> {
    let (sde, gm) = reference_setting();
    let quad = SmQuadrature::standard(&sde, &gm);
    let sm = |rf: &RandomFeatureNet| -> Result<f64> {
        Ok(sm_population(
            &ScoreModel::RandomFeature(rf.clone()),
            &sde,
            &gm,
            Weighting::Standard,
            &quad,
        )?
        .value)
    };
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n_pairs as u64 {
        let s = split_seed(seed, i);
        let a = random_rf(32, sde.horizon(), 1.0, s);
        let mut b = a.clone();
        let mut rng = rng_from_seed(split_seed(s, 7));
        let ab: Vec<f64> = (0..32)
            .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        b.set_a(&ab);
        let mut mid = a.clone();
        let am: Vec<f64> = a.a().iter().zip(&ab).map(|(x, y)| 0.5 * (x + y)).collect();
        mid.set_a(&am);
        worst = worst.max(sm(&mid)? - 0.5 * (sm(&a)? + sm(&b)?));
    }
    Ok(PropertyResult::at_most(
        "sm_midpoint_convexity_violation",
        worst,
        1e-9,
    ))
}

/// Exact population quadratic of a random-feature net of width `m`.
pub fn rf_quadratic(m: usize, seed: u64) -> Result<(RandomFeatureNet, QuadraticForm)> {
    let (sde, gm) = reference_setting();
    let rf = RandomFeatureNet::new(
        1,
        m,
        TimeEmbedding::new(TimeEmbedding::DEFAULT_DIM, sde.horizon()),
        seed,
    );
    let quad = SmQuadrature::standard(&sde, &gm);
    let q = quadratic_coeffs_quadrature(&rf, &sde, &gm, Weighting::Standard, &quad)?;
    Ok((rf, q))
}

/// Flow times `10 … 1000`, log-spaced.
pub fn flow_times() -> Vec<f64> {
    (0..=20)
        .map(|i| 10.0 * 100f64.powf(i as f64 / 20.0))
        .collect()
}

/// Gradient flow of the population loss from `A = 0`, sampled at `taus`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub taus: Vec<f64>,
    pub rkhs: Vec<f64>,
    pub gap: Vec<f64>,
    /// `‖A*‖/√m` of the normal-equations optimum.
    pub rkhs_optimum: f64,
}

impl FlowPath {
    pub fn new(q: &QuadraticForm, taus: &[f64]) -> Result<Self> {
        let m = q.width();
        let optimum = q.optimum(OPTIMUM_RIDGE)?;
        let l_star = q.loss(&optimum);
        let norm = |a: &[f64]| (a.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt();
        let a0 = vec![0.0; m];
        let mut rkhs = Vec::with_capacity(taus.len());
        let mut gap = Vec::with_capacity(taus.len());
        for &tau in taus {
            let a = q.gradient_flow(&a0, tau);
            rkhs.push(norm(&a));
            gap.push(q.loss(&a) - l_star);
        }
        Ok(Self {
            taus: taus.to_vec(),
            rkhs,
            gap,
            rkhs_optimum: norm(&optimum),
        })
    }

    pub fn rkhs_exponent(&self) -> f64 {
        loglog_slope(&self.taus, &self.rkhs)
    }

    pub fn gap_exponent(&self) -> f64 {
        let pos: Vec<(f64, f64)> = self
            .taus
            .iter()
            .zip(&self.gap)
            .filter(|(_, g)| **g > 0.0)
            .map(|(t, g)| (*t, *g))
            .collect();
        let (t, g): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        loglog_slope(&t, &g)
    }
}

/// Loss along the flow never increases.
pub fn descent_check(q: &QuadraticForm, seed: u64) -> PropertyResult {
    let m = q.width();
    let mut rng = rng_from_seed(seed);
    let a0: Vec<f64> = (0..m)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let losses: Vec<f64> = std::iter::once(0.0)
        .chain((0..=24).map(|i| 10f64.powf(-2.0 + i as f64 / 4.0)))
        .map(|tau| q.loss(&q.gradient_flow(&a0, tau)))
        .collect();
    let scale = losses.iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let worst = losses
        .windows(2)
        .map(|w| (w[1] - w[0]) / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    PropertyResult::at_most("gradient_flow_loss_increase", worst, 1e-10)
}

pub fn rkhs_bound_check(path: &FlowPath) -> PropertyResult {
    let worst = path.rkhs.iter().fold(0.0f64, |a, r| a.max(*r)) / path.rkhs_optimum;
    PropertyResult::at_most("rkhs_norm_over_optimum_norm", worst, 1.0 + 1e-9)
}

pub fn rkhs_growth_check(path: &FlowPath) -> PropertyResult {
    PropertyResult::at_most("rkhs_growth_exponent", path.rkhs_exponent(), 0.6)
}

pub fn optimality_gap_check(path: &FlowPath) -> PropertyResult {
    PropertyResult::at_most("optimality_gap_exponent", path.gap_exponent(), -0.9)
}

/// Monte-Carlo gap between width-`m` sub-networks and the reference net.
pub fn mc_gaps(spec: &McGapSpec, seed: u64) -> Result<Vec<McGap>> {
    let (sde, gm) = reference_setting();
    mc_gap_estimate(
        spec.feature_seed.unwrap_or(split_seed(seed, 0)),
        spec.rule,
        &sde,
        &gm,
        spec.weighting,
        &spec.m_list,
        spec.m_ref,
        spec.n_mc,
        split_seed(seed, 1),
    )
}

pub fn mc_gap_slope_check(gaps: &[McGap]) -> PropertyResult {
    let m: Vec<f64> = gaps.iter().map(|g| g.m as f64).collect();
    let g: Vec<f64> = gaps.iter().map(|g| g.gap).collect();
    PropertyResult::within("mc_gap_loglog_slope", loglog_slope(&m, &g), -1.3, -0.7)
}

/// Largest ratio of consecutive gaps (below one when the gap shrinks with `m`).
pub fn mc_gap_monotone_check(gaps: &[McGap]) -> PropertyResult {
    let worst = gaps
        .windows(2)
        .map(|w| w[1].gap / w[0].gap)
        .fold(0.0f64, f64::max);
    PropertyResult::at_most("mc_gap_successive_ratio", worst, 1.0)
}

pub const BOUND_SAMPLE_SIZES: [f64; 4] = [1e2, 1e3, 1e4, 1e5];

/// `single_mode_bound(τ_es(n), n, n)·n^{2/5}` across `n`; reports max/min.
pub fn bound_scaling_check(consts: &BoundConstants) -> Result<PropertyResult> {
    let scaled = BOUND_SAMPLE_SIZES
        .iter()
        .map(|&n| Ok(single_mode_bound(tau_es(n)?, n, n, consts, 0.0)?.total * n.powf(0.4)))
        .collect::<Result<Vec<f64>>>()?;
    let hi = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PropertyResult::at_most(
        "scaled_bound_max_over_min",
        hi / lo,
        2.0,
    ))
}

/// Log-log slope of `optimal_tau(n, n)` against `n`, relative to 2/5.
pub fn optimal_tau_scaling_check(consts: &BoundConstants) -> Result<PropertyResult> {
    let taus = BOUND_SAMPLE_SIZES
        .iter()
        .map(|&n| Ok(optimal_tau(n, n, consts)?.tau))
        .collect::<Result<Vec<f64>>>()?;
    let slope = loglog_slope(&BOUND_SAMPLE_SIZES, &taus);
    Ok(PropertyResult::at_most(
        "optimal_tau_exponent_rel_error",
        (slope / 0.4 - 1.0).abs(),
        0.1,
    ))
}

/// Midpoint convexity of the bound in `τ` on a log grid.
pub fn bound_convexity_check(consts: &BoundConstants) -> Result<PropertyResult> {
    let (m, n) = (1e3, 1e3);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..60 {
        let a = 10f64.powf(i as f64 / 10.0);
        let b = 10f64.powf((i + 1) as f64 / 10.0);
        let f = |t: f64| single_mode_bound(t, m, n, consts, 0.0).map(|r| r.total);
        let mid = f(0.5 * (a + b))?;
        let chord = 0.5 * (f(a)? + f(b)?);
        worst = worst.max((mid - chord) / chord.abs().max(1.0));
    }
    Ok(PropertyResult::at_most(
        "bound_midpoint_convexity_violation",
        worst,
        1e-12,
    ))
}

/// Fraction of forward draws inside the high-probability range at confidence `1 − δ`.
pub fn score_error_coverage_check(seed: u64) -> Result<PropertyResult> {
    let (sde, gm) = reference_setting();
    let delta = 0.05;
    let coverage = score_error_coverage(
        &sde,
        |rng| vec![gm.sample_point(rng)],
        1.5,
        delta,
        10_000,
        seed,
    )?;
    Ok(PropertyResult::at_least(
        "forward_range_coverage",
        coverage,
        1.0 - delta,
    ))
}

/// KL of a width-`m` random-feature net whose coefficients are the least-squares
/// fit of the exact score at `t_min`, weighted by `p_{t_min}` on the KL grid.
pub fn oracle_fit_kl(m: usize, seed: u64) -> Result<f64> {
    let (sde, gm) = reference_setting();
    let mut rf = RandomFeatureNet::new(
        1,
        m,
        TimeEmbedding::new(TimeEmbedding::DEFAULT_DIM, sde.horizon()),
        seed,
    );
    let grid = gm.standard_grid();
    let t = sde.t_min();
    let pt = gm.perturbed(&sde, t)?;
    let mut b1 = DMatrix::<f64>::zeros(m, m);
    let mut b2 = DVector::<f64>::zeros(m);
    for x in grid.points() {
        let w = pt.density(x);
        if w < 1e-16 {
            continue;
        }
        // s(x) = (1/m) Σ a_i φ_i(x), so the design column is φ/m.
        let phi = DVector::from_vec(rf.features(&[x], t)) / m as f64;
        b1 += &phi * phi.transpose() * w;
        b2 += &phi * (w * pt.score(x));
    }
    let scale = b1.diagonal().max();
    let reg = b1 + DMatrix::identity(m, m) * (OPTIMUM_RIDGE * scale);
    let a = reg
        .cholesky()
        .ok_or_else(|| crate::Error::NonFinite("least-squares system is singular".into()))?
        .solve(&b2);
    rf.set_a(a.as_slice());
    model_kl(&ScoreModel::RandomFeature(rf), &sde, &gm, grid)
}

pub fn oracle_fit_check(seed: u64) -> Result<PropertyResult> {
    Ok(PropertyResult::at_most(
        "least_squares_fit_kl",
        oracle_fit_kl(128, seed)?,
        0.05,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_rows() {
        let r = PropertyResult::at_most("x", 0.5, 1.0);
        assert!(r.pass);
        assert_eq!(r.csv_row(), "x,0.5,<= 1e0,pass");
        assert!(!PropertyResult::at_most("x", f64::NAN, 1.0).pass);
        assert!(!PropertyResult::within("x", -1.4, -1.3, -0.7).pass);
    }

    #[test]
    fn analytic_checks_pass() {
        let c = BoundConstants::default();
        for r in [
            bound_scaling_check(&c).unwrap(),
            optimal_tau_scaling_check(&c).unwrap(),
            bound_convexity_check(&c).unwrap(),
            gaussian_kl_check().unwrap(),
            density_reconstruction_check().unwrap(),
        ] {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn negated_score_breaks_the_inequality() {
        assert!(!kl_inequality_check(3, 1, true).unwrap().pass);
    }
}
