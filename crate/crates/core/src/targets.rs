//! One-dimensional Gaussian-mixture targets with analytic densities, scores
//! and forward-perturbed marginals, plus seeded dataset generation.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::UniformGrid;
use crate::sde::{LinearSde, ScoreField};
use crate::seed::rng_from_seed;

/// Point count of the standard evaluation grid.
pub const STANDARD_GRID_POINTS: usize = 4096;
/// Half-width of the standard grid beyond the outermost means, in units of the largest sd.
pub const STANDARD_GRID_SDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    #[serde(rename = "q")]
    pub weight: f64,
    #[serde(rename = "mu")]
    pub mean: f64,
    #[serde(rename = "var")]
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for GaussianMixture {
    type Error = Error;

    fn try_from(components: Vec<Component>) -> Result<Self> {
        GaussianMixture::new(components)
    }
}

impl From<GaussianMixture> for Vec<Component> {
    fn from(gm: GaussianMixture) -> Self {
        gm.components
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        for c in &components {
            if !(c.weight > 0.0)
                || !(c.variance > 0.0)
                || !c.mean.is_finite()
                || !c.variance.is_finite()
            {
                return Err(Error::InvalidArgument(format!(
                    "invalid mixture component {c:?}"
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn single(mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    /// Equal-weight mixture of `N(-mu, var)` and `N(mu, var)`.
    pub fn symmetric(mu: f64, variance: f64) -> Result<Self> {
        Self::new(vec![
            Component {
                weight: 0.5,
                mean: -mu,
                variance,
            },
            Component {
                weight: 0.5,
                mean: mu,
                variance,
            },
        ])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn component_log_terms(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(move |c| {
            c.weight.ln()
                - 0.5 * (2.0 * PI * c.variance).ln()
                - 0.5 * (x - c.mean).powi(2) / c.variance
        })
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let max = self
            .component_log_terms(x)
            .fold(f64::NEG_INFINITY, f64::max);
        max + self
            .component_log_terms(x)
            .map(|l| (l - max).exp())
            .sum::<f64>()
            .ln()
    }

    /// `Σ q_k N(x; μ_k, σ_k²)`.
    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    fn posterior_weights(&self, x: f64) -> Vec<f64> {
        let logs: Vec<f64> = self.component_log_terms(x).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        w
    }

    /// `d/dx log p(x) = Σ_k w_k(x) (μ_k - x) / σ_k²`.
    pub fn score(&self, x: f64) -> f64 {
        self.posterior_weights(x)
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * (c.mean - x) / c.variance)
            .sum()
    }

    /// `d/dx score(x) = Σ_k w_k (a_k² - 1/σ_k²) - s²` with `a_k = (μ_k - x)/σ_k²`.
    pub fn score_derivative(&self, x: f64) -> f64 {
        let w = self.posterior_weights(x);
        let mut s = 0.0;
        let mut second = 0.0;
        for (wk, c) in w.iter().zip(&self.components) {
            let a = (c.mean - x) / c.variance;
            s += wk * a;
            second += wk * (a * a - 1.0 / c.variance);
        }
        second - s * s
    }

    /// Law of `x(t)` when `x(0)` follows this mixture: means `r μ_k`,
    /// variances `r² σ_k² + r² v²`, weights unchanged.
    pub fn perturbed(&self, sde: &LinearSde, t: f64) -> Result<GaussianMixture> {
        let r = sde.r(t)?;
        let kernel_var = sde.kernel_std(t)?.powi(2);
        Ok(GaussianMixture {
            components: self
                .components
                .iter()
                .map(|c| Component {
                    weight: c.weight,
                    mean: r * c.mean,
                    variance: r * r * c.variance + kernel_var,
                })
                .collect(),
        })
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().unwrap();
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                chosen = c;
                break;
            }
        }
        chosen.mean + chosen.variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    /// `n` i.i.d. draws, deterministic per `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "dataset size must be positive".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let samples = (0..n).map(|_| self.sample_point(&mut rng)).collect();
        Ok(Dataset {
            samples,
            seed,
            source: self.clone(),
        })
    }

    /// Uniform grid with 4096 points on `[min μ - 10 max σ, max μ + 10 max σ]`.
    pub fn standard_grid(&self) -> UniformGrid {
        let max_sd = self
            .components
            .iter()
            .map(|c| c.variance.sqrt())
            .fold(0.0, f64::max);
        let lo = self
            .components
            .iter()
            .map(|c| c.mean)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean)
            .fold(f64::NEG_INFINITY, f64::max);
        UniformGrid::new(
            lo - STANDARD_GRID_SDS * max_sd,
            hi + STANDARD_GRID_SDS * max_sd,
            STANDARD_GRID_POINTS,
        )
    }

    /// Grid covering the standard grids of `p_t` over 65 times in `[0, T]` and of `π`.
    pub fn coverage_grid(&self, sde: &LinearSde) -> UniformGrid {
        let mut grid = self.standard_grid();
        for i in 0..=64 {
            let t = sde.horizon() * i as f64 / 64.0;
            let pt = self.perturbed(sde, t).expect("t is inside the horizon");
            grid = grid.union(&pt.standard_grid());
        }
        let prior = sde.prior();
        let reach = STANDARD_GRID_SDS * prior.variance.sqrt();
        grid.union(&UniformGrid::new(prior.mean - reach, prior.mean + reach, 2))
    }

    /// Score field of the forward-perturbed marginal `p_t` as a function of `(x, t)`.
    pub fn marginal_score<'a>(&'a self, sde: &'a LinearSde) -> MarginalScore<'a> {
        MarginalScore { gm: self, sde }
    }
}

/// `∇ log p_t` for a mixture target under a linear SDE.
pub struct MarginalScore<'a> {
    gm: &'a GaussianMixture,
    sde: &'a LinearSde,
}

impl MarginalScore<'_> {
    /// The perturbed mixture `p_t`, with `t` clamped to `[0, T]`.
    pub fn at(&self, t: f64) -> GaussianMixture {
        self.gm
            .perturbed(self.sde, t.clamp(0.0, self.sde.horizon()))
            .expect("clamped time is in range")
    }
}

impl ScoreField for MarginalScore<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn score_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        out[0] = self.at(t).score(x[0]);
    }

    fn divergence(&self, x: &[f64], t: f64) -> f64 {
        self.at(t).score_derivative(x[0])
    }
}

/// Training samples drawn from a known mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<f64>,
    pub seed: u64,
    pub source: GaussianMixture,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    seed: u64,
    n: usize,
    source: GaussianMixture,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn meta_path(path: &Path) -> std::path::PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        path.with_file_name(name)
    }

    /// Writes `x` column CSV plus a `<file>.meta.json` sidecar with seed and source.
    pub fn write_csv(&self, path: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x")?;
        for x in &self.samples {
            writeln!(out, "{}", crate::harness::csvfmt::sig10(*x))?;
        }
        out.flush()?;
        let meta = DatasetMeta {
            seed: self.seed,
            n: self.len(),
            source: self.source.clone(),
        };
        let meta_path = Self::meta_path(path);
        std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
        Ok(vec![path.to_path_buf(), meta_path])
    }

    /// Loads a dataset written by [`Dataset::write_csv`], regenerating it from the
    /// recorded seed and source.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let meta: DatasetMeta =
            serde_json::from_str(&std::fs::read_to_string(Self::meta_path(path))?)?;
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("x") {
            return Err(Error::MissingColumn("x".into()));
        }
        let stored: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{l}: {e}")))
            })
            .collect::<Result<_>>()?;
        let regenerated = meta.source.sample(meta.n, meta.seed)?;
        if stored.len() != regenerated.len() {
            return Err(Error::Parse(
                "dataset CSV length disagrees with its metadata".into(),
            ));
        }
        Ok(regenerated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::trapezoid;

    #[test]
    fn density_examples() {
        let std = GaussianMixture::single(0.0, 1.0).unwrap();
        assert!((std.density(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let expected = 0.398_942_280_401_432_7 * (-4.5f64).exp();
        assert!((gm.density(0.0) - expected).abs() < 1e-15);
        let grid = gm.standard_grid();
        let vals: Vec<f64> = grid.points().iter().map(|&x| gm.density(x)).collect();
        assert!((trapezoid(&vals, grid.spacing()) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn far_tail_density_stays_positive_in_log_space() {
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        assert!(gm.log_density(60.0).is_finite());
        assert!(gm.score(60.0).is_finite());
    }

    #[test]
    fn score_examples() {
        let gm = GaussianMixture::symmetric(2.0, 1.0).unwrap();
        assert!(gm.score(0.0).abs() < 1e-15);
        assert_eq!(GaussianMixture::single(3.0, 1.0).unwrap().score(0.0), 3.0);
        let gm3 = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let expected = -3.0 + 3.0 * 9f64.tanh();
        assert!((gm3.score(3.0) - expected).abs() < 1e-15);
        // -3 + 3 tanh 9 = -6 e^{-18} / (1 + e^{-18})
        assert!((expected + 6.0 * (-18f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn score_matches_finite_difference_of_log_density() {
        let gm = GaussianMixture::new(vec![
            Component {
                weight: 0.3,
                mean: -2.0,
                variance: 0.5,
            },
            Component {
                weight: 0.7,
                mean: 1.5,
                variance: 2.0,
            },
        ])
        .unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-6.0..6.0);
            let h = 1e-5;
            let fd = (gm.log_density(x + h) - gm.log_density(x - h)) / (2.0 * h);
            let s = gm.score(x);
            assert!(
                (s - fd).abs() <= 1e-6 * s.abs().max(1.0),
                "x = {x}: {s} vs {fd}"
            );
            let fd2 = (gm.score(x + h) - gm.score(x - h)) / (2.0 * h);
            assert!((gm.score_derivative(x) - fd2).abs() <= 1e-5 * fd2.abs().max(1.0));
        }
    }

    #[test]
    fn perturbed_mixture_examples() {
        let sde = LinearSde::ou(3.0).unwrap();
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        assert_eq!(gm.perturbed(&sde, 0.0).unwrap(), gm);
        let pt = gm.perturbed(&sde, std::f64::consts::LN_2).unwrap();
        for (c, sign) in pt.components().iter().zip([-1.0, 1.0]) {
            assert!((c.mean - 1.5 * sign).abs() < 1e-15);
            assert!((c.variance - 1.0).abs() < 1e-12);
            assert_eq!(c.weight, 0.5);
        }
        let std = GaussianMixture::single(0.0, 1.0).unwrap();
        let moved = std.perturbed(&sde, 2.2).unwrap();
        assert!((moved.components()[0].variance - 1.0).abs() < 1e-12);
        assert_eq!(moved.components()[0].mean, 0.0);
    }

    #[test]
    fn perturbation_semigroup_under_ou() {
        let sde = LinearSde::ou(5.0).unwrap();
        let gm = GaussianMixture::new(vec![
            Component {
                weight: 0.25,
                mean: -4.0,
                variance: 0.3,
            },
            Component {
                weight: 0.75,
                mean: 2.0,
                variance: 1.7,
            },
        ])
        .unwrap();
        let (s, t) = (0.7, 2.1);
        let two_step = gm
            .perturbed(&sde, s)
            .unwrap()
            .perturbed(&sde, t - s)
            .unwrap();
        let direct = gm.perturbed(&sde, t).unwrap();
        for (a, b) in two_step.components().iter().zip(direct.components()) {
            assert!((a.mean - b.mean).abs() < 1e-10);
            assert!((a.variance - b.variance).abs() < 1e-10);
        }
    }

    #[test]
    fn weights_must_sum_to_one() {
        let bad = GaussianMixture::new(vec![
            Component {
                weight: 0.5,
                mean: 0.0,
                variance: 1.0,
            },
            Component {
                weight: 0.4,
                mean: 1.0,
                variance: 1.0,
            },
        ]);
        assert!(bad.is_err());
        assert!(GaussianMixture::single(0.0, 0.0).is_err());
    }

    #[test]
    fn sampling_statistics_and_determinism() {
        let gm = GaussianMixture::symmetric(3.0, 1.0).unwrap();
        let data = gm.sample(1_000_000, 17).unwrap();
        let positive = data.samples.iter().filter(|&&x| x > 0.0).count() as f64 / 1e6;
        assert!((positive - 0.5).abs() < 0.002);
        let std = GaussianMixture::single(0.0, 1.0)
            .unwrap()
            .sample(1_000_000, 4)
            .unwrap();
        let mean = std.samples.iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 0.004);
        let a = gm.sample(1000, 99).unwrap();
        let b = gm.sample(1000, 99).unwrap();
        let bits = |d: &Dataset| d.samples.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let data = GaussianMixture::symmetric(3.0, 1.0)
            .unwrap()
            .sample(50, 8)
            .unwrap();
        let written = data.write_csv(&path).unwrap();
        assert_eq!(written.len(), 2);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x\n"));
        assert_eq!(Dataset::read_csv(&path).unwrap(), data);
    }
}
