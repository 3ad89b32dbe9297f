use bcdiff::harness::{compare_known_vs_adaptive, detect_convergence, run_experiment, variance_trace, RunOptions};
use bcdiff::manifest::{
    preset, AlgorithmKind, AlgorithmSpec, ExperimentConfig, NodeSpec, ProfileFile, ProfileSpec, TopologySpec,
    VarianceMode, WeightRule,
};
use bcdiff_core::datamodel::Field;
use proptest::prelude::*;

fn small(name: &str, trials: usize, horizon: usize) -> ExperimentConfig {
    let mut cfg = preset(name).unwrap();
    cfg.trials = trials;
    cfg.horizon = horizon;
    cfg.steady_state_window = cfg.steady_state_window.min(horizon);
    cfg
}

fn opts(threads: usize) -> RunOptions {
    RunOptions {
        threads: Some(threads),
        skip_theory: false,
    }
}

/// Four isotropic real nodes with the given noise variances.
fn four_nodes(sigma2_v: f64, sigma2_n: f64, variance: VarianceMode, a: WeightRule) -> ExperimentConfig {
    let node = NodeSpec {
        sigma2_v,
        sigma2_n,
        sigma2_u: Some(1.0),
        r_u_re: None,
        r_u_im: None,
    };
    ExperimentConfig {
        name: "four".into(),
        seed: 3,
        trials: 64,
        horizon: 1500,
        steady_state_window: 200,
        profile: ProfileSpec::Inline(ProfileFile {
            field: Field::Real,
            w_o_re: vec![1.0, 1.0],
            w_o_im: None,
            nodes: vec![node; 4],
        }),
        topology: TopologySpec::Random { nodes: 4, radius: 0.8, seed: 1 },
        algorithms: vec![AlgorithmSpec {
            label: "atc".into(),
            kind: AlgorithmKind::Atc,
            a,
            c: WeightRule::Metropolis,
            mu: 0.02,
            variance,
            alpha: Some(0.99),
        }],
        tracking: None,
        base_dir: None,
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    for name in ["fig4", "fig10"] {
        let cfg = small(name, 20, 60);
        let one = run_experiment(&cfg, opts(1)).unwrap();
        let three = run_experiment(&cfg, opts(3)).unwrap();
        for (a, b) in one.algorithms.iter().zip(&three.algorithms) {
            assert_eq!(a, b, "{name}/{}", a.spec.label);
        }
    }
}

#[test]
fn seed_changes_the_data() {
    let mut cfg = small("fig4", 8, 30);
    let a = run_experiment(&cfg, opts(1)).unwrap();
    cfg.seed += 1;
    let b = run_experiment(&cfg, opts(1)).unwrap();
    assert_ne!(a.algorithms[0].curves.network_msd, b.algorithms[0].curves.network_msd);
}

#[test]
fn curves_start_at_the_parameter_norm() {
    let cfg = small("fig3", 8, 20);
    let r = run_experiment(&cfg, opts(1)).unwrap();
    let w2 = r.resolved.profile.w_o_norm_sq();
    for a in &r.algorithms {
        assert_eq!(a.curves.msd.len(), 21);
        assert!(a.curves.msd[0].iter().all(|x| (x - w2).abs() < 1e-12));
        assert!((a.curves.network_msd[0] - w2).abs() < 1e-12);
        assert_eq!(a.curves.network_msd_se[0], 0.0);
    }
}

#[test]
fn zero_step_size_keeps_the_initial_error() {
    let mut cfg = small("fig3", 3, 1);
    cfg.algorithms.iter_mut().for_each(|a| a.mu = 0.0);
    let r = run_experiment(&cfg, opts(1)).unwrap();
    let w2 = r.resolved.profile.w_o_norm_sq();
    for a in &r.algorithms {
        assert_eq!(a.diverged, 0);
        assert!((a.curves.steady.network_msd - w2).abs() < 1e-12);
        assert!(a.curves.steady.network_msd_se < 1e-12);
    }
}

#[test]
fn standard_error_shrinks_with_trials() {
    let se = |trials| {
        let r = run_experiment(&small("fig4", trials, 400), opts(1)).unwrap();
        r.algorithms[0].curves.steady.network_msd_se
    };
    let ratio = se(100) / se(400);
    assert!((1.6..2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn theory_overlay_follows_the_configuration() {
    let r = run_experiment(&small("fig3", 8, 50), opts(1)).unwrap();
    assert!(r.algorithm("bc-atc").unwrap().theory.is_some());
    assert!(r.algorithm("bc-noncoop").unwrap().theory.is_some());
    assert!(r.algorithm("std-atc").unwrap().theory.is_none());
    assert!(r.algorithm("std-atc").unwrap().predicted_bias.is_some());
    assert!(r.algorithm("bc-atc").unwrap().predicted_bias.is_none());
    let t = run_experiment(&small("fig9", 8, 50), opts(1)).unwrap();
    assert!(t.algorithms.iter().all(|a| a.theory.is_none()));
    let s = run_experiment(&small("fig3", 8, 50), RunOptions { threads: Some(1), skip_theory: true }).unwrap();
    assert!(s.algorithms.iter().all(|a| a.theory.is_none()));
}

#[test]
fn divergent_trials_are_counted_and_excluded() {
    let mut cfg = four_nodes(0.01, 0.01, VarianceMode::Known, WeightRule::RelativeVariance);
    cfg.trials = 10;
    cfg.horizon = 200;
    cfg.algorithms[0].mu = 5.0;
    let r = run_experiment(&cfg, opts(1)).unwrap();
    let a = &r.algorithms[0];
    assert_eq!(a.diverged, 10);
    assert_eq!(a.curves.trials, 0);
    assert!(a.theory.is_none());
}

/// Limit of `σ̂²` when the estimate feeds back into the compensated
/// solution `w = w° / (σ²_u + σ²_n − σ̂²)` with `σ²_u = 1`.
fn estimate_fixed_point(sigma2_v: f64, sigma2_n: f64, w2: f64) -> f64 {
    let mut s = sigma2_n;
    for _ in 0..500 {
        let g = 1.0 / (1.0 + sigma2_n - s);
        s = (sigma2_v + w2 * (g - 1.0).powi(2) + sigma2_n * w2 * g * g) / (w2 * g * g);
    }
    s
}

#[test]
fn variance_estimate_without_regression_noise_tends_to_output_noise_ratio() {
    let cfg = four_nodes(0.02, 0.0, VarianceMode::Adaptive, WeightRule::Metropolis);
    let traces = variance_trace(&cfg, opts(1)).unwrap();
    let last = traces[0].mean.last().unwrap();
    let target = estimate_fixed_point(0.02, 0.0, 2.0);
    assert!((target - 0.01).abs() < 2e-4);
    for x in last {
        assert!((x / target - 1.0).abs() < 0.05, "{x} vs {target}");
    }
    assert_eq!(traces[0].truth, vec![0.0; 4]);
}

#[test]
fn inflated_output_noise_offsets_the_adaptive_estimate() {
    let quiet = four_nodes(0.001, 0.1, VarianceMode::Known, WeightRule::RelativeVariance);
    let cmp = compare_known_vs_adaptive(&quiet, opts(1)).unwrap();
    assert!(cmp.low_ratio_nodes.is_empty());
    assert!(cmp.estimation_offset.iter().all(|o| o.abs() < 0.005), "{:?}", cmp.estimation_offset);
    assert!(cmp.msd_delta_db.iter().all(|d| d.abs() < 0.5), "{:?}", cmp.msd_delta_db);

    let loud = four_nodes(0.1, 0.1, VarianceMode::Known, WeightRule::RelativeVariance);
    let cmp = compare_known_vs_adaptive(&loud, opts(1)).unwrap();
    assert_eq!(cmp.low_ratio_nodes, vec![0, 1, 2, 3]);
    let expected = estimate_fixed_point(0.1, 0.1, 2.0) - 0.1;
    for off in &cmp.estimation_offset {
        assert!((off / expected - 1.0).abs() < 0.15, "offset {off} vs {expected}");
    }
    assert!(cmp.msd_delta_db.iter().all(|d| *d > 1.0), "{:?}", cmp.msd_delta_db);
}

#[test]
fn convergence_detection() {
    let decay: Vec<f64> = (0..600).map(|i| 1e-3 + (-(i as f64) / 40.0).exp()).collect();
    let c = detect_convergence(&decay).unwrap();
    assert!((150..450).contains(&c), "{c}");
    let flat = vec![1.0; 100];
    assert_eq!(detect_convergence(&flat), Some(0));
    let falling: Vec<f64> = (0..100).map(|i| (-(i as f64) / 5.0).exp()).collect();
    assert_eq!(detect_convergence(&falling), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn per_node_curves_average_to_the_network_curve(seed in any::<u64>(), trials in 1usize..12) {
        let mut cfg = small("fig3", trials, 25);
        cfg.seed = seed;
        let r = run_experiment(&cfg, RunOptions { threads: Some(1), skip_theory: true }).unwrap();
        for a in &r.algorithms {
            for (row, net) in a.curves.msd.iter().zip(&a.curves.network_msd) {
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                prop_assert!((mean - net).abs() <= 1e-12 * net.max(1e-300));
            }
            prop_assert!(a.curves.network_msd.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }
}
