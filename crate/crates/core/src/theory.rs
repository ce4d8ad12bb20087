//! Bound evaluators and empirical checks for the generalization analysis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::csvfmt::sig10;
use crate::objectives::{quadratic_coeffs_quadrature, sm_population, SmQuadrature, OPTIMUM_RIDGE};
use crate::score_net::{RandomFeatureNet, ScoreModel, TimeEmbedding};
use crate::sde::{LinearSde, Weighting};
use crate::seed::rng_from_seed;
use crate::targets::GaussianMixture;

/// Multipliers of the bound terms. `irreducible` is the value of the irreducible
/// loss itself (zero for a target the model class can represent); `c5` scales it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub irreducible: f64,
    pub poly_mu_degree: i32,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            c5: 1.0,
            irreducible: 0.0,
            poly_mu_degree: 6,
        }
    }
}

impl BoundConstants {
    /// Constants may be zero to switch a term off; negative or non-finite is rejected.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c1,
            self.c2,
            self.c3,
            self.c4,
            self.c5,
            self.irreducible,
        ];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Domain(
                "bound constants must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub tau: f64,
    pub m: f64,
    pub n: f64,
    pub mu: Option<f64>,
    /// `τ⁴/(mn)` term.
    pub stat: f64,
    /// `τ³/m²` term.
    pub disc: f64,
    /// `1/τ` term.
    pub opt: f64,
    /// `1/m` term.
    pub approx: f64,
    pub irreducible: f64,
    pub prior_gap: f64,
    pub total: f64,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "tau,m,n,mu,stat,disc,opt,approx,irreducible,prior_gap,total";

    pub fn csv_row(&self) -> String {
        let mu = self.mu.map(sig10).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            sig10(self.tau),
            sig10(self.m),
            sig10(self.n),
            mu,
            sig10(self.stat),
            sig10(self.disc),
            sig10(self.opt),
            sig10(self.approx),
            sig10(self.irreducible),
            sig10(self.prior_gap),
            sig10(self.total)
        )
    }
}

fn check_bound_args(tau: f64, m: f64, n: f64, prior_gap: f64) -> Result<()> {
    if !(tau >= 1.0) || tau.is_infinite() {
        return Err(Error::Domain(format!(
            "tau must be finite and >= 1, got {tau}"
        )));
    }
    if !(m >= 1.0) || !(n >= 1.0) {
        return Err(Error::Domain(format!(
            "m and n must be >= 1, got m={m}, n={n}"
        )));
    }
    if !(prior_gap >= 0.0) || prior_gap.is_infinite() {
        return Err(Error::Domain(format!(
            "prior gap must be finite and >= 0, got {prior_gap}"
        )));
    }
    Ok(())
}

/// `c₁τ⁴/(mn) + c₂τ³/m² + c₃/τ + c₄/m + c₅·irreducible + prior_gap`. Infinite `m` or
/// `n` give the large-sample limit.
pub fn single_mode_bound(
    tau: f64,
    m: f64,
    n: f64,
    consts: &BoundConstants,
    prior_gap: f64,
) -> Result<BoundReport> {
    bound(tau, m, n, None, consts, prior_gap)
}

/// Two-mode version: `μ^k [c₁τ⁴/(mn) + c₂τ³/m²] + c₃/τ + c₄μ²/m + c₅·irreducible +
/// prior_gap` with `k = poly_mu_degree`.
pub fn two_mode_bound(
    tau: f64,
    m: f64,
    n: f64,
    mu: f64,
    consts: &BoundConstants,
    prior_gap: f64,
) -> Result<BoundReport> {
    if !(mu > 0.0) || mu.is_infinite() {
        return Err(Error::Domain(format!(
            "mu must be finite and > 0, got {mu}"
        )));
    }
    bound(tau, m, n, Some(mu), consts, prior_gap)
}

fn bound(
    tau: f64,
    m: f64,
    n: f64,
    mu: Option<f64>,
    consts: &BoundConstants,
    prior_gap: f64,
) -> Result<BoundReport> {
    consts.validate()?;
    check_bound_args(tau, m, n, prior_gap)?;
    let poly = mu.map_or(1.0, |mu| mu.powi(consts.poly_mu_degree));
    let approx_mu = mu.map_or(1.0, |mu| mu * mu);
    let stat = poly * consts.c1 * tau.powi(4) / (m * n);
    let disc = poly * consts.c2 * tau.powi(3) / (m * m);
    let opt = consts.c3 / tau;
    let approx = consts.c4 * approx_mu / m;
    let irreducible = consts.c5 * consts.irreducible;
    Ok(BoundReport {
        tau,
        m,
        n,
        mu,
        stat,
        disc,
        opt,
        approx,
        irreducible,
        prior_gap,
        total: stat + disc + opt + approx + irreducible + prior_gap,
    })
}

/// Upper end of the early-stopping search range.
pub const TAU_SEARCH_MAX: f64 = 1e12;
/// Relative tolerance of the golden-section search.
pub const TAU_SEARCH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalTau {
    pub tau: f64,
    /// Set when the minimizer sits at the upper end of the search range.
    pub at_boundary: bool,
}

/// Minimizer of `single_mode_bound` over `τ ∈ [1, TAU_SEARCH_MAX]` by golden-section
/// search in `log τ` (the bound is convex in `τ`, hence unimodal).
pub fn optimal_tau(m: f64, n: f64, consts: &BoundConstants) -> Result<OptimalTau> {
    consts.validate()?;
    check_bound_args(1.0, m, n, 0.0)?;
    let f = |log_tau: f64| {
        single_mode_bound(log_tau.exp(), m, n, consts, 0.0)
            .expect("arguments checked")
            .total
    };
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, TAU_SEARCH_MAX.ln());
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    // An interval of width TOL in log τ is a relative tolerance of TOL in τ.
    while hi - lo > TAU_SEARCH_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = f(x2);
        }
    }
    let log_tau = 0.5 * (lo + hi);
    Ok(OptimalTau {
        tau: log_tau.exp(),
        at_boundary: TAU_SEARCH_MAX.ln() - log_tau < 10.0 * TAU_SEARCH_TOL,
    })
}

/// Early-stopping time `n^{2/5}`.
pub fn tau_es(n: f64) -> Result<f64> {
    if !(n >= 1.0) || n.is_infinite() {
        return Err(Error::Domain(format!("n must be finite and >= 1, got {n}")));
    }
    Ok(n.powf(0.4))
}

/// Irreducible-loss estimate: the population score-matching loss of the best
/// width-`m` random-feature model (normal-equations optimum on the quadrature).
/// The continuous-width optimum is not accessible, so this is a lower estimate
/// of the irreducible term.
pub fn irreducible_estimate(
    rf: &RandomFeatureNet,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
) -> Result<f64> {
    let quad = SmQuadrature::standard(sde, gm);
    let q = quadratic_coeffs_quadrature(rf, sde, gm, weighting, &quad)?;
    let mut best = rf.clone();
    best.set_a(&q.optimum(OPTIMUM_RIDGE)?);
    Ok(sm_population(&ScoreModel::RandomFeature(best), sde, gm, weighting, &quad)?.value)
}

/// Coefficient rule for the reference nets of the Monte-Carlo gap experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientRule {
    /// `a(w, u) = clamp(w₁, −1, 1)`, the same for every output coordinate.
    #[default]
    ClampFirstCoordinate,
}

impl CoefficientRule {
    pub fn eval(self, w: &[f64], _u: &[f64]) -> f64 {
        match self {
            CoefficientRule::ClampFirstCoordinate => w[0].clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McGap {
    pub m: usize,
    pub gap: f64,
    pub stderr: f64,
}

impl McGap {
    pub const CSV_HEADER: &'static str = "m,gap,stderr";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.m, sig10(self.gap), sig10(self.stderr))
    }
}

/// `𝔼_{t,x}[λ‖s_m − s_ref‖²]` between a width-`m_ref` random-feature net with
/// coefficients from `rule` and its width-`m` sub-networks.
///
/// The reference features are split into `m_ref / m` disjoint blocks of `m`
/// features; each block is a width-`m` net and the gap is averaged over blocks.
/// All widths share the same `(t, x)` draws, `t ~ U[t_min, T]`, `x ~ p_t`.
#[allow(clippy::too_many_arguments)]
pub fn mc_gap_estimate(
    feature_seed: u64,
    rule: CoefficientRule,
    sde: &LinearSde,
    gm: &GaussianMixture,
    weighting: Weighting,
    m_list: &[usize],
    m_ref: usize,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<McGap>> {
    for &m in m_list {
        if m == 0 || !m_ref.is_multiple_of(m) || (m != m_ref && 16 * m > m_ref) {
            return Err(Error::InvalidArgument(format!(
                "m = {m} must divide m_ref = {m_ref} and satisfy 16 m <= m_ref"
            )));
        }
    }
    if n_mc < 2 {
        return Err(Error::InvalidArgument("n_mc must be at least 2".into()));
    }
    let horizon = sde.horizon();
    let mut net = RandomFeatureNet::new(
        1,
        m_ref,
        TimeEmbedding::new(TimeEmbedding::DEFAULT_DIM, horizon),
        feature_seed,
    );
    let de = net.embedding().dim;
    let a: Vec<f64> = (0..m_ref)
        .map(|i| rule.eval(&net.w()[i..i + 1], &net.u()[i * de..(i + 1) * de]))
        .collect();
    net.set_a(&a);

    let mut rng = rng_from_seed(seed);
    let (t_min, t_max) = (sde.t_min(), horizon);
    // Per width: running sum and sum of squares of the per-draw block-averaged gap.
    let mut acc = vec![(0.0f64, 0.0f64); m_list.len()];
    let mut phi = vec![0.0; m_ref];
    for _ in 0..n_mc {
        let t = rng.random_range(t_min..=t_max);
        let x = gm.perturbed(sde, t)?.sample_point(&mut rng);
        let lambda = sde.weight(weighting, t, 1)?;
        let offsets = net.time_offsets(t);
        net.preactivations_with(&[x], &offsets, &mut phi);
        // Terms a_i σ_i, summed per block below.
        let terms: Vec<f64> = phi.iter().zip(&a).map(|(p, a)| a * p.max(0.0)).collect();
        let s_ref = block_mean(&terms);
        for (slot, &m) in acc.iter_mut().zip(m_list) {
            let blocks = terms.chunks_exact(m);
            let n_blocks = blocks.len() as f64;
            let g = blocks
                .map(|b| {
                    let diff = block_mean(b) - s_ref;
                    lambda * diff * diff
                })
                .sum::<f64>()
                / n_blocks;
            slot.0 += g;
            slot.1 += g * g;
        }
    }
    let n = n_mc as f64;
    Ok(m_list
        .iter()
        .zip(acc)
        .map(|(&m, (s, s2))| {
            let mean = s / n;
            let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
            McGap {
                m,
                gap: mean,
                stderr: (var / n).sqrt(),
            }
        })
        .collect())
}

/// `(1/m) Σ terms`, in a fixed summation order so equal inputs give equal outputs.
fn block_mean(terms: &[f64]) -> f64 {
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Fraction of `n_trials` forward draws with
/// `‖x(t)‖_∞ ≤ C_T (‖x₀‖_∞ + √log(1/δ²))`, `C_T = max_{[0,T]} max(r, rv)`.
pub fn score_error_coverage<F>(
    sde: &LinearSde,
    mut x0_sampler: F,
    t: f64,
    delta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&mut crate::seed::StreamRng) -> Vec<f64>,
{
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(0.0..=sde.horizon()).contains(&t) {
        return Err(Error::Domain(format!("t = {t} is outside [0, T]")));
    }
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be positive".into()));
    }
    let c_t = sde.range_constant();
    let slack = (1.0 / (delta * delta)).ln().sqrt();
    let mut rng = rng_from_seed(seed);
    let mut hits = 0usize;
    for _ in 0..n_trials {
        let x0 = x0_sampler(&mut rng);
        let xt = if t == 0.0 {
            x0.clone()
        } else {
            sde.sample_transition(&x0, t, &mut rng)?
        };
        let sup0 = x0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sup_t = xt.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if sup_t <= c_t * (sup0 + slack) {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_trials as f64)
}
