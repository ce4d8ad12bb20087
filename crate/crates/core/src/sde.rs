//! Linear forward SDEs `dx = f(t) x dt + g(t) dW`, their Gaussian transition
//! kernels, the loss weighting, and the reverse-time Euler–Maruyama sampler.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// Relative tolerance for quadrature-backed schedules.
const SCHEDULE_REL_TOL: f64 = 1e-10;

/// Fraction of the horizon below which time sampling and integration stop.
pub const T_MIN_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdePreset {
    Ou,
    VeConstant,
    Custom,
}

/// Piecewise-linear coefficient table, held constant outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::InvalidArgument(
                "coefficient table needs equally many knots and values (at least one)".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "coefficient knots must be strictly increasing".into(),
            ));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "coefficient table has non-finite entries".into(),
            ));
        }
        Ok(Self { knots, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            knots: vec![0.0],
            values: vec![value],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0] {
            return self.values[0];
        }
        if t >= k[k.len() - 1] {
            return self.values[k.len() - 1];
        }
        let i = k.partition_point(|&x| x <= t) - 1;
        let w = (t - k[i]) / (k[i + 1] - k[i]);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// `f ≡ -1`, `g ≡ √2`; stationary law N(0, 1).
    Ou,
    /// `f ≡ 0`, `g ≡ g`.
    VeConstant { g: f64 },
    Custom {
        drift: PiecewiseLinear,
        diffusion: PiecewiseLinear,
    },
}

/// Gaussian prior `π` used to initialize reverse-time integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: f64,
    pub variance: f64,
}

impl Prior {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let ln_norm = -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln();
        x.iter()
            .map(|xi| ln_norm - 0.5 * (xi - self.mean).powi(2) / self.variance)
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        let sd = self.variance.sqrt();
        (0..d)
            .map(|_| self.mean + sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Weighting `λ(t)` of the score-matching objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `λ(t) = r(t) v(t) / √d`, the inverse root of the expected squared DSM target norm.
    #[default]
    Standard,
    /// `λ(t) = g(t)²`, the likelihood weighting.
    DiffusionSquared,
    /// `λ ≡ 1`.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSde {
    schedule: Schedule,
    horizon: f64,
}

impl LinearSde {
    pub fn new(schedule: Schedule, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if let Schedule::VeConstant { g } = schedule {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "VE diffusion must be positive, got {g}"
                )));
            }
        }
        Ok(Self { schedule, horizon })
    }

    pub fn ou(horizon: f64) -> Result<Self> {
        Self::new(Schedule::Ou, horizon)
    }

    pub fn ve_constant(g: f64, horizon: f64) -> Result<Self> {
        Self::new(Schedule::VeConstant { g }, horizon)
    }

    pub fn custom(
        drift: PiecewiseLinear,
        diffusion: PiecewiseLinear,
        horizon: f64,
    ) -> Result<Self> {
        Self::new(Schedule::Custom { drift, diffusion }, horizon)
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn preset(&self) -> SdePreset {
        match self.schedule {
            Schedule::Ou => SdePreset::Ou,
            Schedule::VeConstant { .. } => SdePreset::VeConstant,
            Schedule::Custom { .. } => SdePreset::Custom,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn t_min(&self) -> f64 {
        T_MIN_FRACTION * self.horizon
    }

    pub fn drift(&self, t: f64) -> f64 {
        match &self.schedule {
            Schedule::Ou => -1.0,
            Schedule::VeConstant { .. } => 0.0,
            Schedule::Custom { drift, .. } => drift.eval(t),
        }
    }

    pub fn diffusion(&self, t: f64) -> f64 {
        match &self.schedule {
            Schedule::Ou => std::f64::consts::SQRT_2,
            Schedule::VeConstant { g } => *g,
            Schedule::Custom { diffusion, .. } => diffusion.eval(t),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.horizon;
        if t.is_nan() || t < -slack || t > self.horizon + slack {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    fn check_t_min(&self, t: f64) -> Result<()> {
        self.check_time(t)?;
        let t_min = self.t_min();
        if t < t_min * (1.0 - 1e-9) {
            return Err(Error::Singularity { t, t_min });
        }
        Ok(())
    }

    /// `∫₀ᵗ f`, split at the table knots so each panel is smooth.
    fn drift_integral(&self, t: f64) -> f64 {
        match &self.schedule {
            Schedule::Ou => -t,
            Schedule::VeConstant { .. } => 0.0,
            Schedule::Custom { drift, .. } => {
                integrate_between_knots(&|s| drift.eval(s), drift.knots(), 0.0, t)
            }
        }
    }

    /// `r(t) = exp(∫₀ᵗ f)`.
    pub fn r(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.drift_integral(t.max(0.0)).exp())
    }

    /// `v(t) = sqrt(∫₀ᵗ g² / r²)`.
    pub fn v(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.v2(t.max(0.0)).sqrt())
    }

    fn v2(&self, t: f64) -> f64 {
        match &self.schedule {
            Schedule::Ou => (2.0 * t).exp_m1(),
            Schedule::VeConstant { g } => g * g * t,
            Schedule::Custom { drift, diffusion } => {
                let integrand = |s: f64| {
                    let g = diffusion.eval(s);
                    g * g * (-2.0 * self.drift_integral(s)).exp()
                };
                let mut knots: Vec<f64> = drift
                    .knots()
                    .iter()
                    .chain(diffusion.knots())
                    .copied()
                    .collect();
                knots.sort_by(f64::total_cmp);
                integrate_between_knots(&integrand, &knots, 0.0, t)
            }
        }
    }

    /// Kernel standard deviation `r(t) v(t)`; for OU computed as `sqrt(1 - e^{-2t})`.
    pub fn kernel_std(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let t = t.max(0.0);
        Ok(match self.schedule {
            Schedule::Ou => (-(-2.0 * t).exp_m1()).sqrt(),
            _ => self.drift_integral(t).exp() * self.v2(t).sqrt(),
        })
    }

    pub fn prior(&self) -> Prior {
        match self.schedule {
            Schedule::Ou => Prior {
                mean: 0.0,
                variance: 1.0,
            },
            Schedule::VeConstant { g } => Prior {
                mean: 0.0,
                variance: g * g * self.horizon,
            },
            Schedule::Custom { .. } => {
                let s = self.kernel_std(self.horizon).expect("horizon is in range");
                Prior {
                    mean: 0.0,
                    variance: s * s,
                }
            }
        }
    }

    /// `x(t) = r x0 + r v z`, `z ~ N(0, I)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        t: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let r = self.r(t)?;
        let std = self.kernel_std(t)?;
        Ok(x0
            .iter()
            .map(|x| r * x + std * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    /// Denoising target `∇ log p_{t|0}(xt | x0) = -(xt - r x0) / (r² v²)`.
    pub fn perturbation_score(&self, x0: &[f64], xt: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_t_min(t)?;
        if x0.len() != xt.len() {
            return Err(Error::InvalidArgument(
                "x0 and xt differ in dimension".into(),
            ));
        }
        let r = self.r(t)?;
        let var = self.kernel_std(t)?.powi(2);
        Ok(x0.iter().zip(xt).map(|(a, b)| -(b - r * a) / var).collect())
    }

    /// `λ(t)` for the chosen weighting in dimension `d`.
    pub fn weight(&self, weighting: Weighting, t: f64, d: usize) -> Result<f64> {
        self.check_time(t)?;
        Ok(match weighting {
            Weighting::Standard => self.kernel_std(t)? / (d as f64).sqrt(),
            Weighting::DiffusionSquared => self.diffusion(t).powi(2),
            Weighting::Unit => 1.0,
        })
    }

    /// Standard weighting `λ(t) = r v / √d`.
    pub fn lambda_weight(&self, t: f64, d: usize) -> Result<f64> {
        self.weight(Weighting::Standard, t, d)
    }

    /// `C_T = max_{t ∈ [0, T]} max(r(t), r(t) v(t))`, scanned on 2001 nodes.
    pub fn range_constant(&self) -> f64 {
        let nodes = 2000;
        (0..=nodes)
            .map(|i| {
                let t = self.horizon * i as f64 / nodes as f64;
                let r = self.r(t).unwrap();
                r.max(self.kernel_std(t).unwrap())
            })
            .fold(0.0, f64::max)
    }
}

fn integrate_between_knots<F: Fn(f64) -> f64>(f: &F, knots: &[f64], a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut total = 0.0;
    let mut lo = a;
    for &k in knots.iter().filter(|&&k| k > a && k < b) {
        if k > lo {
            total += adaptive_simpson(f, lo, k, SCHEDULE_REL_TOL);
            lo = k;
        }
    }
    total + adaptive_simpson(f, lo, b, SCHEDULE_REL_TOL)
}

/// A time-dependent vector field `s(x, t)` on `ℝᵈ` with known divergence.
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    /// `tr ∂s/∂x`.
    fn divergence(&self, x: &[f64], t: f64) -> f64;

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(x, t, &mut out);
        out
    }
}

/// Closure-backed score field, mostly for analytic test fields.
pub struct FnScore<F, G> {
    dim: usize,
    score: F,
    divergence: G,
}

impl<F, G> FnScore<F, G>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
    G: Fn(&[f64], f64) -> f64 + Sync,
{
    pub fn new(dim: usize, score: F, divergence: G) -> Self {
        Self {
            dim,
            score,
            divergence,
        }
    }
}

impl<F, G> ScoreField for FnScore<F, G>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
    G: Fn(&[f64], f64) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.score)(x, t, out)
    }

    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        (self.divergence)(x, t)
    }
}

/// Row-major set of `len` points in `ℝ^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// First coordinate of every point.
    pub fn first_coords(&self) -> Vec<f64> {
        self.data.iter().step_by(self.dim).copied().collect()
    }
}

/// Euler–Maruyama integration of the reverse-time SDE
/// `dx = [f x - g² s] dt + g dW̄` from `T` down to `t_min`, with `x(T) ~ π`.
pub fn reverse_sde_sample<S, R>(
    sde: &LinearSde,
    score: &S,
    n_steps: usize,
    n_samples: usize,
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
    let t_end = sde.t_min();
    let h = (sde.horizon() - t_end) / n_steps as f64;
    let sqrt_h = h.sqrt();
    let mut data = Vec::with_capacity(n_samples * d);
    let mut s = vec![0.0; d];
    for _ in 0..n_samples {
        let mut x = prior.sample(d, rng);
        for k in 0..n_steps {
            let t = sde.horizon() - k as f64 * h;
            let (f, g) = (sde.drift(t), sde.diffusion(t));
            score.score_into(&x, t, &mut s);
            if let Some(bad) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Blowup {
                    t,
                    detail: format!("score component {bad} is {} at x = {x:?}", s[bad]),
                });
            }
            for (xi, si) in x.iter_mut().zip(&s) {
                let z: f64 = rng.sample(StandardNormal);
                *xi -= h * (f * *xi - g * g * si);
                *xi += g * sqrt_h * z;
            }
        }
        data.extend_from_slice(&x);
    }
    Ok(Samples { dim: d, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn ou_closed_forms() {
        let sde = LinearSde::ou(3.0).unwrap();
        assert_eq!(sde.r(0.0).unwrap(), 1.0);
        assert_eq!(sde.v(0.0).unwrap(), 0.0);
        assert!((sde.r(LN2).unwrap() - 0.5).abs() < 1e-15);
        assert!((sde.v(LN2).unwrap() - 3f64.sqrt()).abs() < 1e-12);
        for t in [1e-4, 0.1, 0.7, 2.9] {
            let prod = sde.r(t).unwrap() * sde.v(t).unwrap();
            assert!((prod - (1.0 - (-2.0 * t).exp()).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn ve_constant_schedule() {
        let sde = LinearSde::ve_constant(1.0, 5.0).unwrap();
        assert_eq!(sde.r(1.7).unwrap(), 1.0);
        assert!((sde.v(4.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(
            sde.prior(),
            Prior {
                mean: 0.0,
                variance: 5.0
            }
        );
    }

    #[test]
    fn custom_tables_reproduce_presets() {
        let ou_as_custom = LinearSde::custom(
            PiecewiseLinear::constant(-1.0),
            PiecewiseLinear::constant(std::f64::consts::SQRT_2),
            3.0,
        )
        .unwrap();
        let ou = LinearSde::ou(3.0).unwrap();
        for t in [0.0, 0.3, LN2, 2.5, 3.0] {
            let (a, b) = (ou_as_custom.r(t).unwrap(), ou.r(t).unwrap());
            assert!((a - b).abs() <= 1e-10 * b);
            let (a, b) = (ou_as_custom.v(t).unwrap(), ou.v(t).unwrap());
            assert!((a - b).abs() <= 1e-9 * b.max(1e-300));
        }
        // linear drift f(t) = -t: r(t) = exp(-t²/2)
        let ramp = LinearSde::custom(
            PiecewiseLinear::new(vec![0.0, 4.0], vec![0.0, -4.0]).unwrap(),
            PiecewiseLinear::constant(1.0),
            4.0,
        )
        .unwrap();
        let r = ramp.r(1.5).unwrap();
        assert!((r - (-1.125f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn time_outside_horizon_is_a_domain_error() {
        let sde = LinearSde::ou(3.0).unwrap();
        assert!(matches!(sde.r(3.5), Err(Error::Domain(_))));
        assert!(matches!(sde.v(-0.1), Err(Error::Domain(_))));
        assert!(matches!(sde.r(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn v_is_nondecreasing_and_r_positive() {
        let sde = LinearSde::custom(
            PiecewiseLinear::new(vec![0.0, 1.0, 2.0], vec![-0.5, 0.5, -2.0]).unwrap(),
            PiecewiseLinear::new(vec![0.0, 2.0], vec![0.1, 2.0]).unwrap(),
            2.0,
        )
        .unwrap();
        let mut prev = 0.0;
        for i in 0..=40 {
            let t = 2.0 * i as f64 / 40.0;
            assert!(sde.r(t).unwrap() > 0.0);
            let v = sde.v(t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn perturbation_score_examples() {
        let sde = LinearSde::ou(3.0).unwrap();
        assert!(sde.perturbation_score(&[2.0], &[1.0], LN2).unwrap()[0].abs() < 1e-15);
        let s = sde.perturbation_score(&[2.0], &[2.0], LN2).unwrap()[0];
        assert!((s + 4.0 / 3.0).abs() < 1e-12);
        let s = sde.perturbation_score(&[0.0], &[-0.75], LN2).unwrap()[0];
        assert!((s - 1.0).abs() < 1e-12);
        assert!(matches!(
            sde.perturbation_score(&[0.0], &[0.0], 1e-4),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn perturbation_score_is_gradient_of_log_kernel() {
        let sde = LinearSde::ou(3.0).unwrap();
        let (x0, t) = (0.8, 0.4);
        let r = sde.r(t).unwrap();
        let var = sde.kernel_std(t).unwrap().powi(2);
        let logk = |x: f64| -0.5 * (x - r * x0).powi(2) / var;
        for xt in [-1.3, 0.2, 2.4] {
            let h = 1e-5;
            let fd = (logk(xt + h) - logk(xt - h)) / (2.0 * h);
            let s = sde.perturbation_score(&[x0], &[xt], t).unwrap()[0];
            assert!((s - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn lambda_weight_examples() {
        let sde = LinearSde::ou(3.0).unwrap();
        assert!((sde.lambda_weight(LN2, 1).unwrap() - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((sde.lambda_weight(LN2, 4).unwrap() - 0.75f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(sde.lambda_weight(1e-12, 1).unwrap() < 1e-5);
        assert!((sde.weight(Weighting::DiffusionSquared, 1.0, 1).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn transition_moments_match_kernel() {
        let sde = LinearSde::ou(3.0).unwrap();
        let mut rng = rng_from_seed(11);
        let n = 200_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sde.sample_transition(&[2.0], LN2, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 4.0 * (0.75 / n as f64).sqrt());
        assert!((var - 0.75).abs() < 4.0 * 0.75 * (2.0 / n as f64).sqrt());
        let at_zero = sde.sample_transition(&[2.0], 0.0, &mut rng).unwrap();
        assert_eq!(at_zero, vec![2.0]);
    }

    #[test]
    fn zero_score_reverse_sde_follows_discrete_variance_recursion() {
        // With s ≡ 0 the OU reverse step is x <- (1 + h) x + √(2h) z, so the
        // variance obeys V <- (1 + h)² V + 2h exactly, starting from V = 1.
        let sde = LinearSde::ou(1.0).unwrap();
        let zero = FnScore::new(
            1,
            |_: &[f64], _: f64, out: &mut [f64]| out[0] = 0.0,
            |_: &[f64], _: f64| 0.0,
        );
        let n_steps = 200;
        let n = 40_000;
        let samples = reverse_sde_sample(&sde, &zero, n_steps, n, &mut rng_from_seed(3)).unwrap();
        let h = (sde.horizon() - sde.t_min()) / n_steps as f64;
        let mut expected = 1.0;
        for _ in 0..n_steps {
            expected = (1.0 + h).powi(2) * expected + 2.0 * h;
        }
        let xs = samples.first_coords();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(
            (var - expected).abs() < 4.0 * expected * (2.0 / n as f64).sqrt(),
            "{var} vs {expected}"
        );
    }

    #[test]
    fn reverse_sde_rejects_non_finite_scores() {
        let sde = LinearSde::ou(1.0).unwrap();
        let bad = FnScore::new(
            1,
            |_: &[f64], _: f64, out: &mut [f64]| out[0] = f64::NAN,
            |_: &[f64], _: f64| 0.0,
        );
        let err = reverse_sde_sample(&sde, &bad, 10, 1, &mut rng_from_seed(0)).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
        assert!(err.to_string().contains("x ="));
    }
}
