//! The verification suite: every registered property, one report line each.

use rayon::prelude::*;

use super::checks::{self, FlowPath, PropertyResult};
use super::config::{ExperimentConfig, ExperimentKind};
use super::experiments::{run, Report};
use super::manifest::{compare_outputs, Artifacts};
use crate::error::{Error, Result};
use crate::seed::split_seed;
use crate::training::BatchSize;

type Check<'a> = Box<dyn Fn() -> Result<Vec<PropertyResult>> + Send + Sync + 'a>;

fn one(r: Result<PropertyResult>) -> Result<Vec<PropertyResult>> {
    r.map(|p| vec![p])
}

/// Small kl-dynamics configuration used by the reproducibility check.
pub fn tiny_kl_dynamics(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::KlDynamics);
    cfg.seed = seed;
    cfg.sweep.runs = 1;
    cfg.model.width = 16;
    cfg.train.epochs = 40;
    cfg.train.n = 200;
    cfg.train.batch_size = BatchSize::Size(50);
    cfg
}

/// Runs the same small experiment twice and counts differing output files.
pub fn reproducibility_check(seed: u64) -> Result<Vec<PropertyResult>> {
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    for d in &dirs {
        let mut cfg = tiny_kl_dynamics(seed);
        cfg.out_dir = d.path().to_path_buf();
        run(&cfg)?;
    }
    let differing = compare_outputs(dirs[0].path(), dirs[1].path())?;
    let bare = [tempfile::tempdir()?, tempfile::tempdir()?];
    let refused = compare_outputs(bare[0].path(), bare[1].path()).is_err();
    Ok(vec![
        PropertyResult::at_most("rerun_differing_files", differing.len() as f64, 0.0),
        PropertyResult::at_least(
            "unmanifested_comparison_refused",
            if refused { 1.0 } else { 0.0 },
            1.0,
        ),
    ])
}

fn config_round_trip(config: &ExperimentConfig) -> Result<PropertyResult> {
    let back = ExperimentConfig::from_toml_str(&config.to_toml_string()?)?;
    Ok(PropertyResult::at_least(
        "config_round_trip",
        if back == *config { 1.0 } else { 0.0 },
        1.0,
    ))
}

/// Every property of the suite, in registration order.
pub fn properties(config: &ExperimentConfig) -> Result<Vec<PropertyResult>> {
    let v = config.verify;
    let seed = config.seed;
    let s = |k: u64| split_seed(seed, k);
    let consts = config.bounds.constants;
    let checks: Vec<Check> = vec![
        Box::new(move || {
            one(checks::kl_inequality_check(
                v.inequality_models,
                s(0),
                v.inject_score_sign_bug,
            ))
        }),
        Box::new(move || one(checks::rf_gradient_check(s(1)))),
        Box::new(move || one(checks::swish_gradient_check(s(2)))),
        Box::new(|| one(checks::density_reconstruction_check())),
        Box::new(|| one(checks::ode_loglik_check())),
        Box::new(|| one(checks::gaussian_kl_check())),
        Box::new(move || one(checks::dsm_sm_offset_check(20_000, s(3)))),
        Box::new(move || one(checks::convexity_check(5, s(4)))),
        Box::new(move || {
            let (_, q) = checks::rf_quadratic(v.rf_width, s(5))?;
            let path = FlowPath::new(&q, &checks::flow_times())?;
            Ok(vec![
                checks::descent_check(&q, s(6)),
                checks::rkhs_bound_check(&path),
                checks::rkhs_growth_check(&path),
                checks::optimality_gap_check(&path),
            ])
        }),
        Box::new(move || {
            let gaps = checks::mc_gaps(&config.mc_gap, s(7))?;
            Ok(vec![
                checks::mc_gap_slope_check(&gaps),
                checks::mc_gap_monotone_check(&gaps),
            ])
        }),
        Box::new(move || {
            Ok(vec![
                checks::bound_scaling_check(&consts)?,
                checks::optimal_tau_scaling_check(&consts)?,
                checks::bound_convexity_check(&consts)?,
            ])
        }),
        Box::new(move || one(checks::score_error_coverage_check(s(8)))),
        Box::new(move || one(checks::oracle_fit_check(s(9)))),
        Box::new(move || one(config_round_trip(config))),
        Box::new(move || reproducibility_check(s(10))),
    ];
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let groups = pool.install(|| checks.par_iter().map(|c| c()).collect::<Vec<_>>());
    let mut out = Vec::new();
    for g in groups {
        out.extend(g?);
    }
    Ok(out)
}

/// Writes `verify.csv` (one line per property) and its manifest.
pub fn run_verify(config: &ExperimentConfig) -> Result<Report> {
    let mut arts = Artifacts::create(&config.out_dir)?;
    let props = properties(config)?;
    let mut text = format!("{}\n", PropertyResult::CSV_HEADER);
    let mut messages = Vec::new();
    for p in &props {
        text.push_str(&p.csv_row());
        text.push('\n');
        messages.push(p.csv_row());
    }
    std::fs::write(arts.path("verify.csv")?, text)?;
    let failed = props.iter().filter(|p| !p.pass).count();
    messages.push(format!("{} properties, {failed} failed", props.len()));
    let manifest = arts.finish(config)?;
    Ok(Report {
        messages,
        properties: props,
        manifest: Some(manifest),
    })
}
