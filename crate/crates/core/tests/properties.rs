//! Property tests of the invariants shared across modules.

use proptest::prelude::*;
use sgl::density::{density_from_score, kl_quadrature, DensityGrid};
use sgl::harness::csvfmt::sig10;
use sgl::harness::plot::{emit_plot, PlotOptions};
use sgl::harness::{ExperimentConfig, ExperimentKind};
use sgl::quad::UniformGrid;
use sgl::sde::LinearSde;
use sgl::seed::split_seed;
use sgl::targets::{Component, GaussianMixture};
use sgl::theory::{optimal_tau, single_mode_bound, BoundConstants};

fn mixture() -> impl Strategy<Value = GaussianMixture> {
    prop::collection::vec((0.1f64..1.0, -5.0f64..5.0, 0.2f64..3.0), 1..4).prop_map(|cs| {
        let total: f64 = cs.iter().map(|c| c.0).sum();
        GaussianMixture::new(
            cs.into_iter()
                .map(|(w, mean, variance)| Component {
                    weight: w / total,
                    mean,
                    variance,
                })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sig10_round_trips_to_ten_digits(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL) {
        let back: f64 = sig10(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * x.abs(), "{x} -> {}", sig10(x));
        prop_assert_eq!(sig10(back), sig10(x));
    }

    #[test]
    fn split_seed_is_injective_in_the_index(master: u64, i in 0u64..1 << 20, j in 0u64..1 << 20) {
        prop_assume!(i != j);
        prop_assert_ne!(split_seed(master, i), split_seed(master, j));
    }

    #[test]
    fn config_survives_a_toml_round_trip(
        seed: u64,
        lr in 1e-4f64..1.0,
        mu in 0.5f64..20.0,
        kind in prop::sample::select(vec![
            ExperimentKind::KlDynamics,
            ExperimentKind::ModesShift,
            ExperimentKind::CapacitySweep,
            ExperimentKind::Bounds,
            ExperimentKind::McGap,
            ExperimentKind::Verify,
        ]),
    ) {
        let mut cfg = ExperimentConfig::preset(kind);
        cfg.seed = seed;
        cfg.train.learning_rate = lr;
        cfg.target.mu = mu;
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn dotted_override_wins_over_preset(lr in 1e-4f64..1.0) {
        let cfg = ExperimentConfig::load(
            ExperimentKind::KlDynamics,
            None,
            &[format!("train.learning_rate={lr}")],
        )
        .unwrap();
        prop_assert_eq!(cfg.train.learning_rate, lr);
    }

    #[test]
    fn reconstructed_density_has_unit_mass(gm in mixture()) {
        let grid = gm.standard_grid();
        let scores: Vec<f64> = grid.points().iter().map(|&x| gm.score(x)).collect();
        let p = density_from_score(&scores, grid).unwrap();
        prop_assert!((p.mass() - 1.0).abs() < 1e-9);
        prop_assert!(p.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal(p in mixture(), q in mixture()) {
        let grid = UniformGrid::new(-40.0, 40.0, 4001);
        let dp = DensityGrid::mixture(&p, grid).unwrap();
        let dq = DensityGrid::mixture(&q, grid).unwrap();
        prop_assert!(kl_quadrature(&dp, &dp).unwrap().abs() < 1e-12);
        if let Ok(kl) = kl_quadrature(&dp, &dq) {
            prop_assert!(kl >= -1e-9, "KL = {kl}");
        }
    }

    #[test]
    fn mixture_score_is_the_log_density_slope(gm in mixture(), x in -8.0f64..8.0) {
        let h = 1e-5;
        let fd = (gm.log_density(x + h) - gm.log_density(x - h)) / (2.0 * h);
        prop_assert!((fd - gm.score(x)).abs() <= 1e-5 * (1.0 + fd.abs()));
    }

    #[test]
    fn perturbed_mixture_matches_the_kernel(gm in mixture(), t in 0.01f64..3.0) {
        let sde = LinearSde::ou(3.0).unwrap();
        let pt = gm.perturbed(&sde, t).unwrap();
        let (r, std) = (sde.r(t).unwrap(), sde.kernel_std(t).unwrap());
        for (a, b) in gm.components().iter().zip(pt.components()) {
            prop_assert!((b.mean - r * a.mean).abs() < 1e-12 * (1.0 + a.mean.abs()));
            prop_assert!((b.variance - (r * r * a.variance + std * std)).abs() < 1e-9 * b.variance);
        }
    }

    #[test]
    fn bound_decreases_in_sample_size_and_width(
        tau in 1.0f64..1e4,
        m in 1.0f64..1e4,
        n in 1.0f64..1e5,
    ) {
        let c = BoundConstants::default();
        let base = single_mode_bound(tau, m, n, &c, 0.0).unwrap().total;
        prop_assert!(single_mode_bound(tau, m, 2.0 * n, &c, 0.0).unwrap().total <= base);
        prop_assert!(single_mode_bound(tau, 2.0 * m, n, &c, 0.0).unwrap().total <= base);
    }

    #[test]
    fn optimal_tau_is_no_worse_than_its_neighbours(m in 10.0f64..1e4, n in 10.0f64..1e5) {
        let c = BoundConstants::default();
        let opt = optimal_tau(m, n, &c).unwrap();
        let at = |tau: f64| single_mode_bound(tau, m, n, &c, 0.0).unwrap().total;
        let best = at(opt.tau);
        prop_assert!(best <= at(opt.tau * 1.1) * (1.0 + 1e-9));
        if opt.tau / 1.1 >= 1.0 {
            prop_assert!(best <= at(opt.tau / 1.1) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn plot_accepts_arbitrary_series(
        ys in prop::collection::vec(prop::option::of(-1e6f64..1e6), 1..50),
        log_y: bool,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("data.csv");
        let mut text = String::from("x,y\n");
        for (i, y) in ys.iter().enumerate() {
            text.push_str(&format!("{},{}\n", i + 1, y.map(sig10).unwrap_or_default()));
        }
        std::fs::write(&csv, text).unwrap();
        let out = dir.path().join("plot.svg");
        let opts = PlotOptions { log_x: false, log_y, title: None };
        emit_plot(&csv, "x", &["y"], &out, &opts).unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        prop_assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        prop_assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gradient_flow_never_increases_the_loss(m in prop::sample::select(vec![4usize, 16, 64]), seed: u64) {
        let (_, q) = sgl::harness::checks::rf_quadratic(m, seed).unwrap();
        let a0 = vec![0.0; q.width()];
        let mut prev = q.loss(&a0);
        for tau in [1.0, 10.0, 100.0, 1000.0] {
            let l = q.loss(&q.gradient_flow(&a0, tau));
            prop_assert!(l <= prev + 1e-9 * prev.abs().max(1.0), "tau {tau}: {l} > {prev}");
            prev = l;
        }
    }
}
