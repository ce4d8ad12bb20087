//! Experiment configuration: TOML files with dotted `key=value` overrides.
//!
//! Precedence, lowest first: the experiment's built-in preset, the config file,
//! `key=value` overrides, then the dedicated `--out`, `--seed` and `--workers` flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score_net::{ModelKind, ScoreModel, SwishMlp, TimeEmbedding};
use crate::sde::{LinearSde, SdePreset, Weighting};
use crate::targets::GaussianMixture;
use crate::theory::{BoundConstants, CoefficientRule};
use crate::training::{BatchSize, NoiseMode, Optimizer, StopRule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    KlDynamics,
    ModesShift,
    CapacitySweep,
    Bounds,
    McGap,
    Verify,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::KlDynamics,
        ExperimentKind::ModesShift,
        ExperimentKind::CapacitySweep,
        ExperimentKind::Bounds,
        ExperimentKind::McGap,
        ExperimentKind::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::KlDynamics => "kl-dynamics",
            ExperimentKind::ModesShift => "modes-shift",
            ExperimentKind::CapacitySweep => "capacity-sweep",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::McGap => "mc-gap",
            ExperimentKind::Verify => "verify",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Symmetric two-mode target `½N(−μ, σ²) + ½N(μ, σ²)`; `μ = 0` is a single Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSpec {
    pub mu: f64,
    pub variance: f64,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            mu: 3.0,
            variance: 1.0,
        }
    }
}

impl TargetSpec {
    pub fn mixture(&self) -> Result<GaussianMixture> {
        self.mixture_at(self.mu)
    }

    pub fn mixture_at(&self, mu: f64) -> Result<GaussianMixture> {
        let gm = if mu == 0.0 {
            GaussianMixture::single(0.0, self.variance)
        } else {
            GaussianMixture::symmetric(mu, self.variance)
        };
        gm.map_err(|e| Error::Config(format!("target: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSpec {
    pub preset: SdePreset,
    pub horizon: f64,
    /// Diffusion coefficient of the constant-VE preset.
    pub g: f64,
}

impl Default for SdeSpec {
    fn default() -> Self {
        Self {
            preset: SdePreset::Ou,
            horizon: 3.0,
            g: 1.0,
        }
    }
}

impl SdeSpec {
    pub fn build(&self) -> Result<LinearSde> {
        let sde = match self.preset {
            SdePreset::Ou => LinearSde::ou(self.horizon),
            SdePreset::VeConstant => LinearSde::ve_constant(self.g, self.horizon),
            SdePreset::Custom => {
                return Err(Error::Config(
                    "custom schedules are available through the library only".into(),
                ))
            }
        };
        sde.map_err(|e| Error::Config(format!("sde: {e}")))
    }
}

/// Output-layer scaling of the Swish network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutScaling {
    /// Plain `W₂ swish(·) + b₂`.
    Unit,
    /// `W₂ swish(·) / √h + b₂`.
    #[default]
    InvSqrtWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub width: usize,
    pub embedding_dim: usize,
    pub readout: ReadoutScaling,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Swish,
            width: SwishMlp::DEFAULT_WIDTH,
            embedding_dim: TimeEmbedding::DEFAULT_DIM,
            readout: ReadoutScaling::InvSqrtWidth,
        }
    }
}

impl ModelSpec {
    /// One-dimensional model of the given width.
    pub fn build(&self, width: usize, horizon: f64, seed: u64) -> ScoreModel {
        let emb = TimeEmbedding::new(self.embedding_dim, horizon);
        match self.kind {
            ModelKind::RandomFeature => {
                ScoreModel::random_feature(1, width, self.embedding_dim, horizon, seed)
            }
            ModelKind::Swish => {
                let net = SwishMlp::new(1, width, emb, seed);
                let scale = match self.readout {
                    ReadoutScaling::Unit => 1.0,
                    ReadoutScaling::InvSqrtWidth => 1.0 / (width as f64).sqrt(),
                };
                ScoreModel::Swish(net.with_readout_scale(scale))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopSpec {
    pub window: usize,
    pub patience: usize,
}

impl Default for EarlyStopSpec {
    fn default() -> Self {
        Self {
            window: 25,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Independent seeds for kl-dynamics.
    pub runs: usize,
    pub mu_list: Vec<f64>,
    pub m_list: Vec<usize>,
    /// Epochs at which modes-shift writes model densities.
    pub density_epochs: Vec<usize>,
    /// Generalization threshold of the capacity sweep.
    pub kl_criterion: f64,
    /// Epoch at which the capacity sweep reports the KL.
    pub report_epoch: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            runs: 3,
            mu_list: vec![3.0, 15.0],
            m_list: vec![2, 8, 32, 128, 512],
            density_epochs: vec![100, 1000, 1900],
            kl_criterion: 0.1,
            report_epoch: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSpec {
    /// Sample sizes; the width is set to `m = n`.
    pub n_list: Vec<f64>,
    pub mu_list: Vec<f64>,
    pub prior_gap: f64,
    pub constants: BoundConstants,
    /// Sample size of the bound-versus-τ curve.
    pub curve_n: f64,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            n_list: vec![1e2, 1e3, 1e4, 1e5],
            mu_list: vec![3.0, 15.0],
            prior_gap: 0.0,
            constants: BoundConstants::default(),
            curve_n: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McGapSpec {
    pub m_list: Vec<usize>,
    pub m_ref: usize,
    pub n_mc: usize,
    /// Seed of the reference features; derived from the master seed when absent.
    pub feature_seed: Option<u64>,
    pub rule: CoefficientRule,
    pub weighting: Weighting,
}

impl Default for McGapSpec {
    fn default() -> Self {
        Self {
            m_list: (4..=10).map(|k| 1usize << k).collect(),
            m_ref: 1 << 14,
            n_mc: 4000,
            feature_seed: None,
            rule: CoefficientRule::default(),
            weighting: Weighting::Standard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    /// Mutation check: evaluate the score-matching side of the KL inequality with
    /// the model's score negated.
    pub inject_score_sign_bug: bool,
    pub inequality_models: usize,
    /// Width of the random-feature runs in the gradient-flow properties.
    pub rf_width: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            inject_score_sign_bug: false,
            inequality_models: 20,
            rf_width: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub target: TargetSpec,
    pub sde: SdeSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub early_stop: EarlyStopSpec,
    pub sweep: SweepSpec,
    pub bounds: BoundsSpec,
    pub mc_gap: McGapSpec,
    pub verify: VerifySpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(ExperimentKind::KlDynamics)
    }
}

impl ExperimentConfig {
    /// Built-in defaults of an experiment: the Swish network trained by SGD at
    /// rate 0.5 on 1000 points with one frozen `(t, noise)` draw per point.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut train = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.5,
            epochs: 2000,
            batch_size: BatchSize::Size(128),
            n: 1000,
            eval_every: 10,
            noise: NoiseMode::Frozen,
            ..TrainConfig::default()
        };
        let sweep = SweepSpec::default();
        match kind {
            ExperimentKind::KlDynamics => train.epochs = 12_000,
            ExperimentKind::ModesShift => {
                train.epochs = 2000;
                train.snapshot_epochs = sweep.density_epochs.clone();
            }
            ExperimentKind::CapacitySweep => {
                train.epochs = 10_000;
                train.stop = Some(StopRule {
                    kl_below: sweep.kl_criterion,
                    min_epoch: sweep.report_epoch,
                });
            }
            _ => {}
        }
        Self {
            experiment: kind,
            seed: 1,
            out_dir: PathBuf::from("out").join(kind.name()),
            workers: 1,
            target: TargetSpec::default(),
            sde: SdeSpec::default(),
            model: ModelSpec::default(),
            train,
            early_stop: EarlyStopSpec::default(),
            sweep,
            bounds: BoundsSpec::default(),
            mc_gap: McGapSpec::default(),
            verify: VerifySpec::default(),
        }
    }

    /// Preset, then the optional file, then `key=value` overrides (dotted keys such
    /// as `train.learning_rate=0.1`).
    pub fn load(kind: ExperimentKind, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = toml::Value::try_from(Self::preset(kind))
            .map_err(|e| Error::Config(format!("cannot encode preset: {e}")))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(name) = table.get("experiment").and_then(|v| v.as_str()) {
                if name != kind.name() {
                    return Err(Error::Config(format!(
                        "config file is for `{name}`, not `{}`",
                        kind.name()
                    )));
                }
            }
            merge(&mut value, toml::Value::Table(table));
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            set_dotted(&mut value, key.trim(), parse_scalar(raw.trim()))?;
        }
        let cfg: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if cfg.experiment != kind {
            return Err(Error::Config(format!(
                "experiment is `{}`, expected `{}`",
                cfg.experiment.name(),
                kind.name()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode config: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.target.variance > 0.0 && self.target.variance.is_finite()) {
            return bad("target.variance must be positive");
        }
        if !(self.target.mu >= 0.0 && self.target.mu.is_finite()) {
            return bad("target.mu must be finite and non-negative");
        }
        if self.model.width == 0 || self.model.embedding_dim == 0 {
            return bad("model.width and model.embedding_dim must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.sweep.runs == 0 {
            return bad("sweep.runs must be at least 1");
        }
        if self.sweep.mu_list.is_empty() || self.sweep.mu_list.iter().any(|m| !(*m >= 0.0)) {
            return bad("sweep.mu_list must be a nonempty list of non-negative values");
        }
        if self.sweep.m_list.is_empty() || self.sweep.m_list.contains(&0) {
            return bad("sweep.m_list must be a nonempty list of positive widths");
        }
        if self.bounds.n_list.is_empty() || self.bounds.n_list.iter().any(|n| !(*n >= 1.0)) {
            return bad("bounds.n_list must be a nonempty list of values >= 1");
        }
        self.bounds
            .constants
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.mc_gap.m_list.is_empty() {
            return bad("mc_gap.m_list must be nonempty");
        }
        if self.early_stop.window == 0 {
            return bad("early_stop.window must be at least 1");
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `base`; tables merge, everything else replaces.
fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not inside a table")))?;
        if i + 1 == parts.len() {
            table.insert((*part).to_string(), value);
            return Ok(());
        }
        node = table
            .entry((*part).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::Config("empty override key".into()))
}

/// A TOML literal when the text parses as one, a bare string otherwise.
fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
