//! Experiment runners. Each writes CSVs, SVG charts and a manifest under the
//! configured output directory and returns a short report.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checks::{self, PropertyResult};
use super::config::{ExperimentConfig, ExperimentKind};
use super::csvfmt::{opt_sig10, sig10};
use super::manifest::{Artifacts, RunManifest};
use super::plot::{emit_plot, PlotOptions};
use crate::density::{fit_two_component_density, model_density, DensityGrid};
use crate::error::{Error, Result};
use crate::sde::LinearSde;
use crate::seed::split_seed;
use crate::targets::GaussianMixture;
use crate::theory::{optimal_tau, single_mode_bound, tau_es, two_mode_bound, BoundReport, McGap};
use crate::training::{
    early_stop_detect, moving_average, train, EarlyStop, TrainSeeds, TrainTrajectory,
};

/// What a run printed and measured.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub messages: Vec<String>,
    /// Properties checked by the run (only `verify` fills these).
    pub properties: Vec<PropertyResult>,
    pub manifest: Option<RunManifest>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }
}

/// Runs the experiment named in `config`.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::KlDynamics => run_kl_dynamics(config),
        ExperimentKind::ModesShift => run_modes_shift(config),
        ExperimentKind::CapacitySweep => run_capacity_sweep(config),
        ExperimentKind::Bounds => run_bounds(config),
        ExperimentKind::McGap => run_mc_gap(config),
        ExperimentKind::Verify => super::verify::run_verify(config),
    }
}

/// Seeds of run `r`: data, noise and init streams at split indices `3r`, `3r+1`, `3r+2`.
pub fn run_seeds(master: u64, run: u64) -> TrainSeeds {
    TrainSeeds {
        data: split_seed(master, 3 * run),
        noise: split_seed(master, 3 * run + 1),
        init: split_seed(master, 3 * run + 2),
    }
}

fn seed_list(s: &TrainSeeds) -> Vec<(String, u64)> {
    vec![
        ("data".into(), s.data),
        ("noise".into(), s.noise),
        ("init".into(), s.init),
    ]
}

/// One training job of a sweep.
#[derive(Debug, Clone)]
struct Job {
    dir: String,
    mu: f64,
    width: usize,
    seeds: TrainSeeds,
}

fn train_job(config: &ExperimentConfig, job: &Job) -> Result<TrainTrajectory> {
    let sde = config.sde.build()?;
    let gm = config.target.mixture_at(job.mu)?;
    let mut train_cfg = config.train.clone();
    train_cfg.seeds = job.seeds;
    let data = gm.sample(train_cfg.n, job.seeds.data)?;
    let model = config.model.build(job.width, sde.horizon(), job.seeds.init);
    train(model, &sde, &data, &train_cfg, Some(&gm))
}

/// Trains every job on a pool of `config.workers` threads; results keep job order.
fn train_all(config: &ExperimentConfig, jobs: &[Job]) -> Result<Vec<Result<TrainTrajectory>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    Ok(pool.install(|| jobs.par_iter().map(|j| train_job(config, j)).collect()))
}

/// Writes a trajectory (or the partial trajectory of a diverged run) with its KL
/// chart. Returns the finished trajectory, or the divergence error after writing.
fn write_trajectory(
    arts: &mut Artifacts,
    job: &Job,
    outcome: Result<TrainTrajectory>,
    messages: &mut Vec<String>,
) -> Result<std::result::Result<TrainTrajectory, Error>> {
    arts.add_seeds(job.dir.clone(), seed_list(&job.seeds));
    let (traj, err) = match outcome {
        Ok(t) => (t, None),
        Err(Error::Divergence { epoch, trajectory }) => {
            messages.push(format!("{}: diverged at epoch {epoch}", job.dir));
            let t = (*trajectory).clone();
            (t, Some(Error::Divergence { epoch, trajectory }))
        }
        Err(e) => return Err(e),
    };
    let csv = arts.path(format!("{}/trajectory.csv", job.dir))?;
    traj.write_csv(&csv)?;
    if traj.records.iter().any(|r| r.kl.is_some()) {
        let svg = arts.path(format!("{}/kl.svg", job.dir))?;
        let opts = PlotOptions {
            log_y: true,
            title: Some(format!("KL, {}", job.dir)),
            ..Default::default()
        };
        for w in emit_plot(&csv, "epoch", &["kl"], &svg, &opts)? {
            messages.push(format!("{}: {w}", job.dir));
        }
    }
    Ok(match err {
        Some(e) => Err(e),
        None => Ok(traj),
    })
}

fn write_text(arts: &mut Artifacts, rel: &str, text: &str) -> Result<std::path::PathBuf> {
    let p = arts.path(rel)?;
    std::fs::write(&p, text)?;
    Ok(p)
}

fn plot(
    arts: &mut Artifacts,
    csv: &Path,
    rel: &str,
    x: &str,
    ys: &[&str],
    opts: PlotOptions,
    messages: &mut Vec<String>,
) -> Result<()> {
    let svg = arts.path(rel)?;
    for w in emit_plot(csv, x, ys, &svg, &opts)? {
        messages.push(format!("{rel}: {w}"));
    }
    Ok(())
}

/// Location and depth of the smoothed-KL minimum of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UShape {
    pub min_epoch: usize,
    pub min_kl: f64,
    /// Smoothed KL at the evaluation closest to four times `min_epoch`.
    pub kl_at_4x: Option<f64>,
    pub turning_point: bool,
}

impl UShape {
    pub fn rise(&self) -> Option<f64> {
        self.kl_at_4x.map(|k| k / self.min_kl)
    }
}

/// Smoothed-KL minimum of a trajectory evaluated at regular epochs.
pub fn u_shape(traj: &TrainTrajectory, window: usize, patience: usize) -> Result<UShape> {
    let epochs: Vec<usize> = traj
        .records
        .iter()
        .filter(|r| r.kl.is_some())
        .map(|r| r.epoch)
        .collect();
    let kl = traj.kl_series();
    let es: EarlyStop = early_stop_detect(&kl, window, patience)?;
    let smooth = moving_average(&kl, window.max(1));
    let target = 4 * epochs[es.index];
    let kl_at_4x = (target <= *epochs.last().expect("nonempty series")).then(|| {
        let j = epochs
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| e.abs_diff(target))
            .map(|(j, _)| j)
            .expect("nonempty series");
        smooth[j]
    });
    Ok(UShape {
        min_epoch: epochs[es.index],
        min_kl: smooth[es.index],
        kl_at_4x,
        turning_point: es.turning_point,
    })
}

/// KL per epoch for `sweep.runs` seeds; reports the early-stopping epoch of each.
pub fn run_kl_dynamics(config: &ExperimentConfig) -> Result<Report> {
    let mut arts = Artifacts::create(&config.out_dir)?;
    let jobs: Vec<Job> = (0..config.sweep.runs as u64)
        .map(|r| Job {
            dir: format!("run_{r}"),
            mu: config.target.mu,
            width: config.model.width,
            seeds: run_seeds(config.seed, r),
        })
        .collect();
    let outcomes = train_all(config, &jobs)?;
    let mut messages = Vec::new();
    let mut first_err = None;
    let mut trajs = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match write_trajectory(&mut arts, job, outcome, &mut messages)? {
            Ok(t) => trajs.push((job, t)),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut summary =
        String::from("run,min_epoch,min_kl_smoothed,kl_smoothed_at_4x,rise,turning_point\n");
    for (job, t) in &trajs {
        match u_shape(t, config.early_stop.window, config.early_stop.patience) {
            Ok(u) => {
                messages.push(format!(
                    "{}: early-stop epoch {} (smoothed KL {}){}",
                    job.dir,
                    u.min_epoch,
                    sig10(u.min_kl),
                    if u.turning_point {
                        ""
                    } else {
                        ", no turning point"
                    }
                ));
                summary.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    job.dir,
                    u.min_epoch,
                    sig10(u.min_kl),
                    opt_sig10(u.kl_at_4x),
                    opt_sig10(u.rise()),
                    u.turning_point
                ));
            }
            Err(e) => messages.push(format!("{}: no early-stop estimate ({e})", job.dir)),
        }
    }
    write_text(&mut arts, "summary.csv", &summary)?;
    if !trajs.is_empty() {
        let header: Vec<String> = trajs.iter().map(|(j, _)| j.dir.clone()).collect();
        let mut text = format!("epoch,{}\n", header.join(","));
        let epochs = trajs[0].1.epochs();
        for (i, e) in epochs.iter().enumerate() {
            let cells: Vec<String> = trajs
                .iter()
                .map(|(_, t)| opt_sig10(t.records.get(i).and_then(|r| r.kl)))
                .collect();
            text.push_str(&format!("{e},{}\n", cells.join(",")));
        }
        let csv = write_text(&mut arts, "kl_all.csv", &text)?;
        let cols: Vec<&str> = header.iter().map(String::as_str).collect();
        let opts = PlotOptions {
            log_y: true,
            title: Some("KL divergence during training".into()),
            ..Default::default()
        };
        plot(
            &mut arts,
            &csv,
            "kl_all.svg",
            "epoch",
            &cols,
            opts,
            &mut messages,
        )?;
    }
    finish(arts, config, messages, first_err)
}

fn finish(
    arts: Artifacts,
    config: &ExperimentConfig,
    messages: Vec<String>,
    err: Option<Error>,
) -> Result<Report> {
    let manifest = arts.finish(config)?;
    match err {
        Some(e) => Err(e),
        None => Ok(Report {
            messages,
            properties: Vec::new(),
            manifest: Some(manifest),
        }),
    }
}

fn mu_label(mu: f64) -> String {
    format!("mu_{}", sig10(mu))
}

/// Writes `x,target,model` for one model density.
fn write_density(
    arts: &mut Artifacts,
    rel: &str,
    target: &DensityGrid,
    model: &DensityGrid,
) -> Result<std::path::PathBuf> {
    let p = arts.path(rel)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&p)?);
    writeln!(out, "x,target,model")?;
    for ((x, a), b) in target
        .grid
        .points()
        .iter()
        .zip(&target.values)
        .zip(&model.values)
    {
        writeln!(out, "{},{},{}", sig10(*x), sig10(*a), sig10(*b))?;
    }
    out.flush()?;
    Ok(p)
}

/// Best-epoch summary of a modes-shift run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModesSummary {
    pub mu: f64,
    pub best_epoch: usize,
    pub best_kl: f64,
    pub weights: [f64; 2],
    pub means: [f64; 2],
}

impl ModesSummary {
    pub fn dominant_weight(&self) -> f64 {
        self.weights[0].max(self.weights[1])
    }
}

/// Two-component fit of the best-KL model density.
pub fn modes_summary(
    traj: &TrainTrajectory,
    sde: &LinearSde,
    gm: &GaussianMixture,
    mu: f64,
) -> Result<Option<ModesSummary>> {
    let (Some((best_epoch, best_kl)), Some(best)) = (traj.best_kl(), traj.best.as_ref()) else {
        return Ok(None);
    };
    let dens = model_density(&best.model, sde, gm.standard_grid())?;
    let spread = mu.max(1.0);
    let fit = fit_two_component_density(&dens, [-spread, spread], 200);
    Ok(Some(ModesSummary {
        mu,
        best_epoch,
        best_kl,
        weights: fit.weights,
        means: fit.means,
    }))
}

/// Identically budgeted runs for each mode distance, with density snapshots.
pub fn run_modes_shift(config: &ExperimentConfig) -> Result<Report> {
    let mut arts = Artifacts::create(&config.out_dir)?;
    let sde = config.sde.build()?;
    let seeds = run_seeds(config.seed, 0);
    let jobs: Vec<Job> = config
        .sweep
        .mu_list
        .iter()
        .map(|&mu| Job {
            dir: mu_label(mu),
            mu,
            width: config.model.width,
            seeds,
        })
        .collect();
    let outcomes = train_all(config, &jobs)?;
    let mut messages = Vec::new();
    let mut first_err = None;
    let mut summary =
        String::from("mu,best_epoch,best_kl,weight_1,weight_2,mean_1,mean_2,dominant_weight\n");
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let traj = match write_trajectory(&mut arts, job, outcome, &mut messages)? {
            Ok(t) => t,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let gm = config.target.mixture_at(job.mu)?;
        let grid = gm.standard_grid();
        let target = DensityGrid::mixture(&gm, grid)?;
        let mut snaps: Vec<(String, &crate::score_net::ScoreModel)> = traj
            .snapshots
            .iter()
            .map(|s| (format!("epoch_{}", s.epoch), &s.model))
            .collect();
        if let Some(b) = &traj.best {
            snaps.push(("best".into(), &b.model));
        }
        for (label, model) in snaps {
            let dens = model_density(model, &sde, grid)?;
            let rel = format!("{}/density_{label}.csv", job.dir);
            let csv = write_density(&mut arts, &rel, &target, &dens)?;
            let opts = PlotOptions {
                title: Some(format!("density, {} {label}", job.dir)),
                ..Default::default()
            };
            plot(
                &mut arts,
                &csv,
                &format!("{}/density_{label}.svg", job.dir),
                "x",
                &["target", "model"],
                opts,
                &mut messages,
            )?;
        }
        if let Some(s) = modes_summary(&traj, &sde, &gm, job.mu)? {
            messages.push(format!(
                "{}: best KL {} at epoch {}, dominant mode weight {}",
                job.dir,
                sig10(s.best_kl),
                s.best_epoch,
                sig10(s.dominant_weight())
            ));
            summary.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                sig10(s.mu),
                s.best_epoch,
                sig10(s.best_kl),
                sig10(s.weights[0]),
                sig10(s.weights[1]),
                sig10(s.means[0]),
                sig10(s.means[1]),
                sig10(s.dominant_weight())
            ));
        }
    }
    write_text(&mut arts, "summary.csv", &summary)?;
    finish(arts, config, messages, first_err)
}

/// Per-width outcome of the capacity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub m: usize,
    pub kl_at_report: Option<f64>,
    pub first_epoch_below: Option<usize>,
    pub last_epoch: usize,
}

impl CapacityRow {
    pub fn generalizes(&self) -> bool {
        self.first_epoch_below.is_some()
    }
}

/// One run per width; KL at the report epoch and the first epoch meeting the criterion.
pub fn run_capacity_sweep(config: &ExperimentConfig) -> Result<Report> {
    let mut arts = Artifacts::create(&config.out_dir)?;
    let seeds = run_seeds(config.seed, 0);
    let jobs: Vec<Job> = config
        .sweep
        .m_list
        .iter()
        .map(|&m| Job {
            dir: format!("m_{m}"),
            mu: config.target.mu,
            width: m,
            seeds,
        })
        .collect();
    let outcomes = train_all(config, &jobs)?;
    let mut messages = Vec::new();
    let mut first_err = None;
    let mut rows = Vec::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match write_trajectory(&mut arts, job, outcome, &mut messages)? {
            Ok(t) => rows.push(CapacityRow {
                m: job.width,
                kl_at_report: t.kl_at_epoch(config.sweep.report_epoch),
                first_epoch_below: t.first_epoch_below(config.sweep.kl_criterion),
                last_epoch: t.records.last().map_or(0, |r| r.epoch),
            }),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut text = format!(
        "m,kl_at_epoch_{},first_epoch_below,generalizes,last_epoch\n",
        config.sweep.report_epoch
    );
    for r in &rows {
        messages.push(format!(
            "m = {}: KL at epoch {} = {}, {}",
            r.m,
            config.sweep.report_epoch,
            opt_sig10(r.kl_at_report),
            match r.first_epoch_below {
                Some(e) => format!("reaches KL <= {} at epoch {e}", config.sweep.kl_criterion),
                None => "does not generalize".into(),
            }
        ));
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.m,
            opt_sig10(r.kl_at_report),
            r.first_epoch_below
                .map(|e| e.to_string())
                .unwrap_or_default(),
            r.generalizes(),
            r.last_epoch
        ));
    }
    let csv = write_text(&mut arts, "summary.csv", &text)?;
    let col = format!("kl_at_epoch_{}", config.sweep.report_epoch);
    let opts = PlotOptions {
        log_x: true,
        log_y: true,
        title: Some("KL at the report epoch against width".into()),
    };
    plot(
        &mut arts,
        &csv,
        "summary.svg",
        "m",
        &[&col],
        opts,
        &mut messages,
    )?;
    finish(arts, config, messages, first_err)
}

/// Bound scaling tables: the bound at `τ_es(n)` with `m = n`, the optimal `τ`, the
/// two-mode version for each `μ`, and the bound against `τ` at `curve_n`.
pub fn run_bounds(config: &ExperimentConfig) -> Result<Report> {
    let mut arts = Artifacts::create(&config.out_dir)?;
    let b = &config.bounds;
    let c = &b.constants;
    let mut messages = Vec::new();
    let mut scaling = String::from(
        "n,tau_es,bound,bound_times_n_pow_0.4,tau_opt,tau_opt_over_n_pow_0.4,tau_opt_at_boundary\n",
    );
    let mut single_mode = format!("{}\n", BoundReport::CSV_HEADER);
    for &n in &b.n_list {
        let tau = tau_es(n)?;
        let r = single_mode_bound(tau, n, n, c, b.prior_gap)?;
        let opt = optimal_tau(n, n, c)?;
        let scale = n.powf(0.4);
        scaling.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sig10(n),
            sig10(tau),
            sig10(r.total),
            sig10(r.total * scale),
            sig10(opt.tau),
            sig10(opt.tau / scale),
            opt.at_boundary
        ));
        single_mode.push_str(&r.csv_row());
        single_mode.push('\n');
        messages.push(format!(
            "n = {}: bound·n^0.4 = {}, optimal tau / n^0.4 = {}",
            sig10(n),
            sig10(r.total * scale),
            sig10(opt.tau / scale)
        ));
    }
    let scaling_csv = write_text(&mut arts, "scaling.csv", &scaling)?;
    write_text(&mut arts, "bound_single_mode.csv", &single_mode)?;
    let mut two_mode = format!("{}\n", BoundReport::CSV_HEADER);
    for &mu in &b.mu_list {
        for &n in &b.n_list {
            two_mode.push_str(&two_mode_bound(tau_es(n)?, n, n, mu, c, b.prior_gap)?.csv_row());
            two_mode.push('\n');
        }
    }
    write_text(&mut arts, "bound_two_mode.csv", &two_mode)?;
    let mut curve = format!("{}\n", BoundReport::CSV_HEADER);
    for i in 0..=60 {
        let tau = 10f64.powf(i as f64 / 10.0);
        curve.push_str(&single_mode_bound(tau, b.curve_n, b.curve_n, c, b.prior_gap)?.csv_row());
        curve.push('\n');
    }
    let curve_csv = write_text(&mut arts, "curve.csv", &curve)?;
    let loglog = |title: &str| PlotOptions {
        log_x: true,
        log_y: true,
        title: Some(title.into()),
    };
    plot(
        &mut arts,
        &scaling_csv,
        "scaling.svg",
        "n",
        &["bound", "tau_opt"],
        loglog("Bound and optimal tau with m = n"),
        &mut messages,
    )?;
    plot(
        &mut arts,
        &curve_csv,
        "curve.svg",
        "tau",
        &["stat", "disc", "opt", "approx", "total"],
        loglog("Bound components against training time"),
        &mut messages,
    )?;
    finish(arts, config, messages, None)
}

/// Monte-Carlo gap against width with its fitted log-log slope.
pub fn run_mc_gap(config: &ExperimentConfig) -> Result<Report> {
    let mut arts = Artifacts::create(&config.out_dir)?;
    let mut messages = Vec::new();
    let gaps: Vec<McGap> = checks::mc_gaps(&config.mc_gap, config.seed)?;
    arts.add_seeds(
        "mc-gap",
        vec![
            (
                "features".into(),
                config
                    .mc_gap
                    .feature_seed
                    .unwrap_or(split_seed(config.seed, 0)),
            ),
            ("draws".into(), split_seed(config.seed, 1)),
        ],
    );
    let mut text = format!("{}\n", McGap::CSV_HEADER);
    for g in &gaps {
        text.push_str(&g.csv_row());
        text.push('\n');
    }
    let csv = write_text(&mut arts, "mc_gap.csv", &text)?;
    let slope = checks::mc_gap_slope_check(&gaps);
    messages.push(format!(
        "log-log slope of the gap against m: {}",
        sig10(slope.value)
    ));
    let opts = PlotOptions {
        log_x: true,
        log_y: true,
        title: Some("Monte-Carlo gap against width".into()),
    };
    plot(
        &mut arts,
        &csv,
        "mc_gap.svg",
        "m",
        &["gap"],
        opts,
        &mut messages,
    )?;
    finish(arts, config, messages, None)
}
