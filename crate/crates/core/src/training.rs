//! Training loops for score networks on the empirical DSM objective, with metric
//! recording along the way.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::density::model_kl;
use crate::error::{Error, Result};
use crate::harness::csvfmt::{opt_sig10, sig10};
use crate::objectives::{dsm_batch, sm_population, uniform_times, SmQuadrature};
use crate::quad::{mean_and_stderr, UniformGrid};
use crate::score_net::{DsmBatch, ScoreModel};
use crate::sde::{LinearSde, Weighting};
use crate::seed::{rng_from_seed, split_seed, StreamRng};
use crate::targets::{Dataset, GaussianMixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Full-batch steps `θ ← θ - lr ∇L̂_n(θ)`, one per epoch.
    GradientFlowEuler,
    /// Shuffled mini-batches, one pass over the data per epoch.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSeeds {
    pub data: u64,
    pub noise: u64,
    pub init: u64,
}

impl Default for TrainSeeds {
    fn default() -> Self {
        Self {
            data: 1,
            noise: 2,
            init: 3,
        }
    }
}

/// Mini-batch size; `Full` uses the whole dataset in every step. Serialized as an
/// integer or the string `"full"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Full => s.serialize_str("full"),
            BatchSize::Size(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Size(u64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Size(n) => Ok(BatchSize::Size(n as usize)),
            Repr::Word(w) if w == "full" => Ok(BatchSize::Full),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "batch_size must be a count or \"full\", got {w:?}"
            ))),
        }
    }
}

/// Whether each data point keeps one `(t, noise)` draw for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Frozen for gradient flow, fresh for the stochastic optimizers.
    #[default]
    Auto,
    Frozen,
    /// Redrawn for every step.
    Fresh,
}

/// Stop once the KL has reached `kl_below` and at least `min_epoch` epochs ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopRule {
    pub kl_below: f64,
    pub min_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    pub n: usize,
    pub eval_every: usize,
    pub seeds: TrainSeeds,
    pub kl_eval: bool,
    pub sm_eval: bool,
    pub weighting: Weighting,
    pub adam: AdamParams,
    pub noise: NoiseMode,
    /// Epochs at which a copy of the model is kept.
    pub snapshot_epochs: Vec<usize>,
    pub stop: Option<StopRule>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.5,
            epochs: 2000,
            batch_size: BatchSize::Size(128),
            n: 1000,
            eval_every: 10,
            seeds: TrainSeeds::default(),
            kl_eval: true,
            sm_eval: false,
            weighting: Weighting::Standard,
            adam: AdamParams::default(),
            noise: NoiseMode::Auto,
            snapshot_epochs: Vec::new(),
            stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.batch_size == BatchSize::Size(0) {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn frozen(&self) -> bool {
        match self.noise {
            NoiseMode::Auto => self.optimizer == Optimizer::GradientFlowEuler,
            NoiseMode::Frozen => true,
            NoiseMode::Fresh => false,
        }
    }

    /// Continuous training time `τ = epoch · lr`.
    pub fn tau(&self, epoch: usize) -> f64 {
        epoch as f64 * self.learning_rate
    }
}

/// Metrics at one evaluation epoch; `None` marks a metric that was not computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub tau: f64,
    pub dsm_loss: f64,
    pub sm_loss: Option<f64>,
    pub kl: Option<f64>,
    pub rkhs_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub model: ScoreModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrajectory {
    pub records: Vec<EvalRecord>,
    pub model: ScoreModel,
    pub config: TrainConfig,
    /// Model at the evaluation with the smallest KL, when KL was evaluated.
    pub best: Option<Snapshot>,
    pub snapshots: Vec<Snapshot>,
}

impl TrainTrajectory {
    pub const CSV_HEADER: &'static str = "epoch,tau,dsm_loss,sm_loss,kl,rkhs_norm";

    pub fn kl_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.kl).collect()
    }

    pub fn epochs(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.epoch).collect()
    }

    pub fn best_kl(&self) -> Option<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.kl.map(|k| (r.epoch, k)))
            .fold(None, |acc, (e, k)| match acc {
                Some((_, kb)) if kb <= k => acc,
                _ => Some((e, k)),
            })
    }

    pub fn kl_at_epoch(&self, epoch: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.epoch == epoch)
            .and_then(|r| r.kl)
    }

    /// First evaluated epoch with `KL ≤ threshold`.
    pub fn first_epoch_below(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.kl.is_some_and(|k| k <= threshold))
            .map(|r| r.epoch)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                sig10(r.tau),
                sig10(r.dsm_loss),
                opt_sig10(r.sm_loss),
                opt_sig10(r.kl),
                opt_sig10(r.rkhs_norm)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluation context: the target, its grids, and a fixed DSM batch over the data.
struct Evaluator<'a> {
    sde: &'a LinearSde,
    gm: Option<&'a GaussianMixture>,
    kl_grid: Option<UniformGrid>,
    sm_quad: Option<SmQuadrature>,
    dsm_eval: DsmBatch,
}

impl Evaluator<'_> {
    fn record(&self, model: &ScoreModel, config: &TrainConfig, epoch: usize) -> Result<EvalRecord> {
        let (dsm_loss, _) = mean_and_stderr(&model.dsm_terms(&self.dsm_eval));
        let kl = match (self.gm, self.kl_grid) {
            (Some(gm), Some(grid)) => Some(model_kl(model, self.sde, gm, grid)?),
            _ => None,
        };
        let sm_loss = match (self.gm, &self.sm_quad) {
            (Some(gm), Some(q)) => {
                Some(sm_population(model, self.sde, gm, config.weighting, q)?.value)
            }
            _ => None,
        };
        Ok(EvalRecord {
            epoch,
            tau: config.tau(epoch),
            dsm_loss,
            sm_loss,
            kl,
            rkhs_norm: model.rkhs_norm().ok(),
        })
    }
}

fn record_is_finite(r: &EvalRecord) -> bool {
    r.dsm_loss.is_finite()
        && [r.sm_loss, r.kl, r.rkhs_norm]
            .iter()
            .all(|v| v.is_none_or(f64::is_finite))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// Trains `model` in place on `dataset` (1-D) and returns the recorded trajectory.
/// KL and SM metrics need `gm`; they are skipped when it is `None` or disabled in
/// the config. A non-finite loss or parameter aborts with [`Error::Divergence`]
/// carrying the records up to the last finite evaluation.
pub fn train(
    mut model: ScoreModel,
    sde: &LinearSde,
    dataset: &Dataset,
    config: &TrainConfig,
    gm: Option<&GaussianMixture>,
) -> Result<TrainTrajectory> {
    config.validate()?;
    if model.dim() != 1 {
        return Err(Error::InvalidArgument(
            "training runs on 1-D datasets".into(),
        ));
    }
    if dataset.len() != config.n {
        return Err(Error::Config(format!(
            "dataset has {} points, config.n = {}",
            dataset.len(),
            config.n
        )));
    }
    let x0 = &dataset.samples;
    let n = x0.len();
    let mut rng: StreamRng = rng_from_seed(config.seeds.noise);

    // Frozen (t_i, x_i(t_i)) pairs define the empirical objective used for the
    // reported DSM loss, and for the updates when noise is frozen.
    let frozen_times = uniform_times(
        sde,
        n,
        &mut rng_from_seed(split_seed(config.seeds.noise, 0)),
    );
    let frozen = dsm_batch(
        sde,
        x0,
        1,
        &frozen_times,
        config.weighting,
        &mut rng_from_seed(split_seed(config.seeds.noise, 1)),
    )?;
    let evaluator = Evaluator {
        sde,
        gm,
        kl_grid: gm.filter(|_| config.kl_eval).map(|g| g.standard_grid()),
        sm_quad: gm.filter(|_| config.sm_eval).map(|g| {
            let cover = g.coverage_grid(sde);
            SmQuadrature::new(16, UniformGrid::new(cover.lo, cover.hi, 1024))
        }),
        dsm_eval: frozen.clone(),
    };

    let mut traj = TrainTrajectory {
        records: Vec::new(),
        model: model.clone(),
        config: config.clone(),
        best: None,
        snapshots: Vec::new(),
    };
    let observe = |traj: &mut TrainTrajectory, model: &ScoreModel, epoch: usize| -> Result<bool> {
        let rec = evaluator.record(model, config, epoch)?;
        if !record_is_finite(&rec) {
            return Ok(false);
        }
        if let Some(kl) = rec.kl {
            if traj.best.is_none() || traj.best_kl().is_some_and(|(_, b)| kl < b) {
                traj.best = Some(Snapshot {
                    epoch,
                    model: model.clone(),
                });
            }
        }
        traj.records.push(rec);
        Ok(true)
    };
    let diverged = |traj: TrainTrajectory, epoch: usize| Error::Divergence {
        epoch,
        trajectory: Box::new(traj),
    };

    if config.snapshot_epochs.contains(&0) {
        traj.snapshots.push(Snapshot {
            epoch: 0,
            model: model.clone(),
        });
    }
    if !observe(&mut traj, &model, 0)? {
        return Err(diverged(traj, 0));
    }

    let p = model.n_params();
    let mut grad = vec![0.0; p];
    let mut adam = AdamState {
        m: vec![0.0; p],
        v: vec![0.0; p],
        step: 0,
    };
    let batch_size = match config.batch_size {
        BatchSize::Full => n,
        BatchSize::Size(b) => b.min(n),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch = DsmBatch::with_capacity(1, batch_size);
    let frozen_mode = config.frozen();

    for epoch in 1..=config.epochs {
        let steps: Vec<Vec<usize>> = if config.optimizer == Optimizer::GradientFlowEuler {
            vec![(0..n).collect()]
        } else {
            order.shuffle(&mut rng);
            order.chunks(batch_size).map(<[usize]>::to_vec).collect()
        };
        for idx in steps {
            batch.clear();
            if frozen_mode {
                for &i in &idx {
                    batch.push(
                        &frozen.xt[i..i + 1],
                        frozen.t[i],
                        &frozen.target[i..i + 1],
                        frozen.lambda[i],
                    );
                }
            } else {
                let xs: Vec<f64> = idx.iter().map(|&i| x0[i]).collect();
                let ts = uniform_times(sde, xs.len(), &mut rng);
                batch = dsm_batch(sde, &xs, 1, &ts, config.weighting, &mut rng)?;
            }
            let loss = model.dsm_loss_grad(&batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(traj, epoch));
            }
            apply_update(&mut model, &grad, config, &mut adam);
        }
        if config.snapshot_epochs.contains(&epoch) {
            traj.snapshots.push(Snapshot {
                epoch,
                model: model.clone(),
            });
        }
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            if !observe(&mut traj, &model, epoch)? {
                return Err(diverged(traj, epoch));
            }
            if let (Some(stop), Some(kl)) = (config.stop, traj.records.last().and_then(|r| r.kl)) {
                if epoch >= stop.min_epoch
                    && traj.first_epoch_below(stop.kl_below).is_some()
                    && kl.is_finite()
                {
                    break;
                }
            }
        }
    }
    traj.model = model;
    Ok(traj)
}

fn apply_update(model: &mut ScoreModel, grad: &[f64], config: &TrainConfig, adam: &mut AdamState) {
    let lr = config.learning_rate;
    let params = model.params_mut();
    match config.optimizer {
        Optimizer::GradientFlowEuler | Optimizer::Sgd => {
            params.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g);
        }
        Optimizer::Adam => {
            let AdamParams { beta1, beta2, eps } = config.adam;
            adam.step += 1;
            let c1 = 1.0 - beta1.powi(adam.step);
            let c2 = 1.0 - beta2.powi(adam.step);
            for ((p, g), (m, v)) in params
                .iter_mut()
                .zip(grad)
                .zip(adam.m.iter_mut().zip(adam.v.iter_mut()))
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// Outcome of [`early_stop_detect`], as indices into the evaluated series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Index minimizing the smoothed series (earliest on ties).
    pub index: usize,
    /// First index at which the smoothed series has stayed above `1.1 · min` for
    /// `patience` consecutive evaluations (counted from the start of that run).
    pub rise_index: Option<usize>,
    /// `false` when the smoothed series never rose after its minimum (for example a
    /// decreasing series, whose minimum is its last entry).
    pub turning_point: bool,
}

/// Centered moving average with the window truncated at the ends.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Early-stopping point of an evaluation series (typically KL per evaluation).
pub fn early_stop_detect(series: &[f64], window: usize, patience: usize) -> Result<EarlyStop> {
    if series.len() <= window + patience {
        return Err(Error::InvalidArgument(format!(
            "series of length {} is too short for window {window} and patience {patience}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "early-stop series contains non-finite values".into(),
        ));
    }
    let smooth = moving_average(series, window.max(1));
    let (index, min) =
        smooth
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) },
            );
    let threshold = min + 0.1 * min.abs();
    let mut run = 0;
    let mut rise_index = None;
    for (i, &v) in smooth.iter().enumerate().skip(index + 1) {
        if v > threshold {
            run += 1;
            if run == patience.max(1) {
                rise_index = Some(i + 1 - run);
                break;
            }
        } else {
            run = 0;
        }
    }
    let turning_point = rise_index.is_some();
    Ok(EarlyStop {
        index,
        rise_index,
        turning_point,
    })
}
