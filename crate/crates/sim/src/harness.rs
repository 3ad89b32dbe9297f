//! Monte-Carlo engine: ensembles of trials, learning curves, steady-state
//! statistics and theory overlays.

use bcdiff_core::algorithms::{AlgorithmConfig, Estimator, Strategy, VarianceSource};
use bcdiff_core::datamodel::{DataStream, ObservationBatch, SystemProfile};
use bcdiff_core::rng::derive_seed;
use bcdiff_core::theory::{build_operators, standard_diffusion_bias, to_db, PerformancePrediction, TransientPrediction};
use bcdiff_core::Complex64;
use rayon::prelude::*;

use crate::error::{Result, SimError};
use crate::manifest::{AlgorithmSpec, ExperimentConfig, ResolvedExperiment, VarianceMode};

/// Weight norm above which a trial is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Trials per reduction chunk. Fixed so that the summation order never
/// depends on the worker count.
pub const CHUNK_TRIALS: usize = 8;

const CHUNKS_PER_WAVE: usize = 32;

/// Slope (dB per iteration) above which the network curve counts as converged.
pub const CONVERGENCE_SLOPE_DB: f64 = -0.01;

/// Regression length for the convergence slope.
pub const CONVERGENCE_SPAN: usize = 50;

/// Ensemble statistics of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurves {
    /// `[iteration][node]`; iteration 0 is the initial state.
    pub msd: Vec<Vec<f64>>,
    pub emse: Vec<Vec<f64>>,
    pub network_msd: Vec<f64>,
    pub network_emse: Vec<f64>,
    /// Standard error of `network_msd` at each iteration.
    pub network_msd_se: Vec<f64>,
    pub steady: SteadyState,
    /// Trials that completed without diverging.
    pub trials: usize,
}

/// Averages over the final window, with standard errors across trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub msd: Vec<f64>,
    pub msd_se: Vec<f64>,
    pub emse: Vec<f64>,
    pub emse_se: Vec<f64>,
    pub network_msd: f64,
    pub network_msd_se: f64,
    pub network_emse: f64,
    pub network_emse_se: f64,
    /// First iteration of the averaging window.
    pub window_start: usize,
    /// First iteration where the network MSD flattens out, if any.
    pub convergence_iteration: Option<usize>,
}

/// Theory curves for an algorithm, where the model applies.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOverlay {
    pub steady: PerformancePrediction,
    pub transient: TransientPrediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub spec: AlgorithmSpec,
    pub curves: LearningCurves,
    /// Ensemble mean of the window-averaged weight error `w° − w_k`, stacked by node.
    pub mean_error: Vec<Complex64>,
    /// Standard errors of the real and imaginary parts of `mean_error`.
    pub mean_error_se: Vec<[f64; 2]>,
    /// Ensemble mean of `σ̂²_n,k` per iteration for adaptive runs.
    pub variance_trace: Option<Vec<Vec<f64>>>,
    pub diverged: usize,
    pub theory: Option<TheoryOverlay>,
    /// Predicted limiting mean error of uncompensated diffusion.
    pub predicted_bias: Option<Vec<Complex64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub resolved: ResolvedExperiment,
    pub algorithms: Vec<AlgorithmResult>,
}

impl ExperimentResult {
    pub fn algorithm(&self, label: &str) -> Option<&AlgorithmResult> {
        self.algorithms.iter().find(|a| a.spec.label == label)
    }
}

/// Running sums for one algorithm.
#[derive(Debug, Clone)]
struct Accum {
    n: usize,
    m: usize,
    trials: usize,
    diverged: usize,
    msd: Vec<f64>,
    emse: Vec<f64>,
    net_msd_sq: Vec<f64>,
    sigma: Option<Vec<f64>>,
    win_msd: Vec<f64>,
    win_msd_sq: Vec<f64>,
    win_emse: Vec<f64>,
    win_emse_sq: Vec<f64>,
    win_net_msd: f64,
    win_net_msd_sq: f64,
    win_net_emse: f64,
    win_net_emse_sq: f64,
    err: Vec<Complex64>,
    err_sq: Vec<[f64; 2]>,
}

impl Accum {
    fn new(n: usize, m: usize, horizon: usize, adaptive: bool) -> Self {
        let len = (horizon + 1) * n;
        Self {
            n,
            m,
            trials: 0,
            diverged: 0,
            msd: vec![0.0; len],
            emse: vec![0.0; len],
            net_msd_sq: vec![0.0; horizon + 1],
            sigma: adaptive.then(|| vec![0.0; len]),
            win_msd: vec![0.0; n],
            win_msd_sq: vec![0.0; n],
            win_emse: vec![0.0; n],
            win_emse_sq: vec![0.0; n],
            win_net_msd: 0.0,
            win_net_msd_sq: 0.0,
            win_net_emse: 0.0,
            win_net_emse_sq: 0.0,
            err: vec![Complex64::new(0.0, 0.0); n * m],
            err_sq: vec![[0.0; 2]; n * m],
        }
    }

    fn add(&mut self, o: &Accum) {
        fn sum(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.trials += o.trials;
        self.diverged += o.diverged;
        sum(&mut self.msd, &o.msd);
        sum(&mut self.emse, &o.emse);
        sum(&mut self.net_msd_sq, &o.net_msd_sq);
        if let (Some(a), Some(b)) = (&mut self.sigma, &o.sigma) {
            sum(a, b);
        }
        sum(&mut self.win_msd, &o.win_msd);
        sum(&mut self.win_msd_sq, &o.win_msd_sq);
        sum(&mut self.win_emse, &o.win_emse);
        sum(&mut self.win_emse_sq, &o.win_emse_sq);
        self.win_net_msd += o.win_net_msd;
        self.win_net_msd_sq += o.win_net_msd_sq;
        self.win_net_emse += o.win_net_emse;
        self.win_net_emse_sq += o.win_net_emse_sq;
        self.err.iter_mut().zip(&o.err).for_each(|(x, y)| *x += y);
        self.err_sq.iter_mut().zip(&o.err_sq).for_each(|(x, y)| {
            x[0] += y[0];
            x[1] += y[1];
        });
    }
}

/// Per-trial record for one algorithm.
struct TrialRecord {
    estimator: Estimator,
    diverged: bool,
    msd: Vec<f64>,
    emse: Vec<f64>,
    sigma: Option<Vec<f64>>,
    err_window: Vec<Complex64>,
}

fn weighted_error(w_o: &[Complex64], w: &[Complex64], r: &bcdiff_core::ComplexMatrix, err: &mut [Complex64]) -> (f64, f64) {
    for ((e, a), b) in err.iter_mut().zip(w_o).zip(w) {
        *e = a - b;
    }
    let msd: f64 = err.iter().map(|x| x.norm_sqr()).sum();
    let m = err.len();
    let mut emse = Complex64::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            emse += err[i].conj() * r[(i, j)] * err[j];
        }
    }
    (msd, emse.re)
}

fn run_trial(
    resolved: &ResolvedExperiment,
    cfg: &ExperimentConfig,
    trial: usize,
    accs: &mut [Accum],
) -> Result<()> {
    let profile = &resolved.profile;
    let (n, m, h) = (profile.num_nodes(), profile.dim(), cfg.horizon);
    let mut stream = DataStream::new(profile.clone(), derive_seed(&[cfg.seed, trial as u64]));
    if let Some(ev) = cfg.tracking {
        let w: Vec<Complex64> = profile.w_o().iter().map(|x| x * ev.factor).collect();
        stream.change_parameters(w, ev.iteration)?;
    }
    let mut records: Vec<TrialRecord> = resolved
        .algorithms
        .iter()
        .map(|(_, a)| {
            let adaptive = matches!(a.variance, VarianceSource::Adaptive { .. });
            Ok(TrialRecord {
                estimator: Estimator::new(a.clone(), m)?,
                diverged: false,
                msd: vec![0.0; (h + 1) * n],
                emse: vec![0.0; (h + 1) * n],
                sigma: adaptive.then(|| vec![0.0; (h + 1) * n]),
                err_window: vec![Complex64::new(0.0, 0.0); n * m],
            })
        })
        .collect::<Result<_>>()?;
    let win_start = h + 1 - cfg.steady_state_window;
    let mut err = vec![Complex64::new(0.0, 0.0); m];
    let mut batch = ObservationBatch::zeros(n, m);

    let record = |rec: &mut TrialRecord, t: usize, w_o: &[Complex64], err: &mut [Complex64]| {
        let st = rec.estimator.state();
        for k in 0..n {
            let (msd, emse) = weighted_error(w_o, st.weights(k), &profile.node(k).r_u, err);
            rec.msd[t * n + k] = msd;
            rec.emse[t * n + k] = emse;
            if t >= win_start {
                for (acc, e) in rec.err_window[k * m..(k + 1) * m].iter_mut().zip(err.iter()) {
                    *acc += e;
                }
            }
        }
        if let Some(s) = &mut rec.sigma {
            s[t * n..(t + 1) * n].copy_from_slice(st.variance_estimates());
        }
    };

    for rec in records.iter_mut() {
        record(rec, 0, stream.current_w_o(), &mut err);
    }
    for t in 1..=h {
        stream.draw_into(&mut batch);
        for rec in records.iter_mut().filter(|r| !r.diverged) {
            rec.estimator.step(&batch)?;
            let st = rec.estimator.state();
            if !st.is_finite() || st.max_weight_norm() > DIVERGENCE_THRESHOLD {
                rec.diverged = true;
                continue;
            }
            record(rec, t, batch.w_o(), &mut err);
        }
    }

    let w = cfg.steady_state_window as f64;
    for (rec, acc) in records.iter().zip(accs.iter_mut()) {
        if rec.diverged {
            acc.diverged += 1;
            continue;
        }
        acc.trials += 1;
        for (a, x) in acc.msd.iter_mut().zip(&rec.msd) {
            *a += x;
        }
        for (a, x) in acc.emse.iter_mut().zip(&rec.emse) {
            *a += x;
        }
        for t in 0..=h {
            let net: f64 = rec.msd[t * n..(t + 1) * n].iter().sum::<f64>() / n as f64;
            acc.net_msd_sq[t] += net * net;
        }
        if let (Some(a), Some(s)) = (&mut acc.sigma, &rec.sigma) {
            a.iter_mut().zip(s).for_each(|(x, y)| *x += y);
        }
        let mut net_msd = 0.0;
        let mut net_emse = 0.0;
        for k in 0..n {
            let wm: f64 = (win_start..=h).map(|t| rec.msd[t * n + k]).sum::<f64>() / w;
            let we: f64 = (win_start..=h).map(|t| rec.emse[t * n + k]).sum::<f64>() / w;
            acc.win_msd[k] += wm;
            acc.win_msd_sq[k] += wm * wm;
            acc.win_emse[k] += we;
            acc.win_emse_sq[k] += we * we;
            net_msd += wm / n as f64;
            net_emse += we / n as f64;
        }
        acc.win_net_msd += net_msd;
        acc.win_net_msd_sq += net_msd * net_msd;
        acc.win_net_emse += net_emse;
        acc.win_net_emse_sq += net_emse * net_emse;
        for ((a, s), e) in acc.err.iter_mut().zip(acc.err_sq.iter_mut()).zip(&rec.err_window) {
            let e = e / w;
            *a += e;
            s[0] += e.re * e.re;
            s[1] += e.im * e.im;
        }
    }
    Ok(())
}

fn standard_error(sum: f64, sum_sq: f64, count: usize) -> f64 {
    if count < 2 {
        return f64::NAN;
    }
    let c = count as f64;
    let mean = sum / c;
    let var = ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0);
    (var / c).sqrt()
}

/// First iteration `t` where the least-squares slope of the dB curve over
/// `[t, t + CONVERGENCE_SPAN)` exceeds [`CONVERGENCE_SLOPE_DB`].
pub fn detect_convergence(curve: &[f64]) -> Option<usize> {
    let db: Vec<f64> = curve.iter().map(|&x| to_db(x)).collect();
    let span = CONVERGENCE_SPAN;
    if db.len() < span {
        return None;
    }
    let xm = (span as f64 - 1.0) / 2.0;
    let sxx: f64 = (0..span).map(|i| (i as f64 - xm).powi(2)).sum();
    (0..=db.len() - span).find(|&t| {
        let win = &db[t..t + span];
        if win.iter().any(|x| !x.is_finite()) {
            return false;
        }
        let ym = win.iter().sum::<f64>() / span as f64;
        let sxy: f64 = win.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
        sxy / sxx > CONVERGENCE_SLOPE_DB
    })
}

fn finish(acc: &Accum, cfg: &ExperimentConfig) -> (LearningCurves, Vec<Complex64>, Vec<[f64; 2]>, Option<Vec<Vec<f64>>>) {
    let (n, m, h) = (acc.n, acc.m, cfg.horizon);
    let c = acc.trials as f64;
    let split = |v: &[f64]| -> Vec<Vec<f64>> { (0..=h).map(|t| v[t * n..(t + 1) * n].iter().map(|x| x / c).collect()).collect() };
    let msd = split(&acc.msd);
    let emse = split(&acc.emse);
    let network_msd: Vec<f64> = msd.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let network_emse: Vec<f64> = emse.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let network_msd_se = (0..=h)
        .map(|t| standard_error(network_msd[t] * c, acc.net_msd_sq[t], acc.trials))
        .collect();
    let steady = SteadyState {
        msd: acc.win_msd.iter().map(|x| x / c).collect(),
        msd_se: (0..n).map(|k| standard_error(acc.win_msd[k], acc.win_msd_sq[k], acc.trials)).collect(),
        emse: acc.win_emse.iter().map(|x| x / c).collect(),
        emse_se: (0..n).map(|k| standard_error(acc.win_emse[k], acc.win_emse_sq[k], acc.trials)).collect(),
        network_msd: acc.win_net_msd / c,
        network_msd_se: standard_error(acc.win_net_msd, acc.win_net_msd_sq, acc.trials),
        network_emse: acc.win_net_emse / c,
        network_emse_se: standard_error(acc.win_net_emse, acc.win_net_emse_sq, acc.trials),
        window_start: h + 1 - cfg.steady_state_window,
        convergence_iteration: detect_convergence(&network_msd),
    };
    let mean_error: Vec<Complex64> = acc.err.iter().map(|x| x / c).collect();
    let mean_error_se = (0..n * m)
        .map(|i| {
            [
                standard_error(acc.err[i].re, acc.err_sq[i][0], acc.trials),
                standard_error(acc.err[i].im, acc.err_sq[i][1], acc.trials),
            ]
        })
        .collect();
    let trace = acc.sigma.as_ref().map(|s| split(s));
    (
        LearningCurves {
            msd,
            emse,
            network_msd,
            network_emse,
            network_msd_se,
            steady,
            trials: acc.trials,
        },
        mean_error,
        mean_error_se,
        trace,
    )
}

/// Mean-square theory for a configuration, when the model covers it:
/// diffusion with known noise variances and a fixed `w°`.
pub fn theory_overlay(profile: &SystemProfile, cfg: &AlgorithmConfig, horizon: usize) -> Result<Option<TheoryOverlay>> {
    let Strategy::Diffusion { a1, a2, c } = &cfg.strategy else {
        return Ok(None);
    };
    if !matches!(cfg.variance, VarianceSource::Known(_)) {
        return Ok(None);
    }
    let ops = build_operators(profile, a1, a2, c, &cfg.step_sizes)?;
    Ok(Some(TheoryOverlay {
        steady: ops.steady_state()?,
        transient: ops.transient(horizon)?,
    }))
}

fn bias_overlay(profile: &SystemProfile, cfg: &AlgorithmConfig) -> Result<Option<Vec<Complex64>>> {
    match (&cfg.strategy, &cfg.variance) {
        (Strategy::Diffusion { a1, a2, c }, VarianceSource::Uncompensated) => {
            Ok(Some(standard_diffusion_bias(profile, a1, a2, c, &cfg.step_sizes)?))
        }
        _ => Ok(None),
    }
}

/// Execution options that never change results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Skip theory overlays.
    pub skip_theory: bool,
}

/// Runs every algorithm of `cfg` on common random data.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let resolved = cfg.build()?;
    let run = || simulate(cfg, &resolved);
    let accs = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| SimError::Config(format!("cannot start thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let algorithms = resolved
        .algorithms
        .iter()
        .zip(&accs)
        .map(|((spec, acfg), acc)| {
            let (curves, mean_error, mean_error_se, variance_trace) = finish(acc, cfg);
            let applicable = !opts.skip_theory && cfg.tracking.is_none();
            let theory = if applicable {
                match theory_overlay(&resolved.profile, acfg, cfg.horizon) {
                    Err(SimError::Core(bcdiff_core::Error::Unstable { .. })) => None,
                    other => other?,
                }
            } else {
                None
            };
            let predicted_bias = if applicable {
                match bias_overlay(&resolved.profile, acfg) {
                    Err(SimError::Core(bcdiff_core::Error::Unstable { .. })) => None,
                    other => other?,
                }
            } else {
                None
            };
            Ok(AlgorithmResult {
                spec: spec.clone(),
                curves,
                mean_error,
                mean_error_se,
                variance_trace,
                diverged: acc.diverged,
                theory,
                predicted_bias,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        resolved,
        algorithms,
    })
}

fn simulate(cfg: &ExperimentConfig, resolved: &ResolvedExperiment) -> Result<Vec<Accum>> {
    let (n, m) = (resolved.profile.num_nodes(), resolved.profile.dim());
    let fresh = || -> Vec<Accum> {
        resolved
            .algorithms
            .iter()
            .map(|(spec, _)| Accum::new(n, m, cfg.horizon, spec.variance == VarianceMode::Adaptive))
            .collect()
    };
    let num_chunks = cfg.trials.div_ceil(CHUNK_TRIALS);
    let mut total = fresh();
    let mut start = 0;
    while start < num_chunks {
        let end = (start + CHUNKS_PER_WAVE).min(num_chunks);
        let wave: Vec<Result<Vec<Accum>>> = (start..end)
            .into_par_iter()
            .map(|chunk| {
                let mut accs = fresh();
                let first = chunk * CHUNK_TRIALS;
                for trial in first..(first + CHUNK_TRIALS).min(cfg.trials) {
                    run_trial(resolved, cfg, trial, &mut accs)?;
                }
                Ok(accs)
            })
            .collect();
        for chunk in wave {
            for (t, c) in total.iter_mut().zip(&chunk?) {
                t.add(c);
            }
        }
        start = end;
    }
    Ok(total)
}

/// Known-variance and adaptive-variance runs of the same algorithm on the same data.
#[derive(Debug, Clone)]
pub struct KnownVsAdaptive {
    pub result: ExperimentResult,
    /// Adaptive minus known steady-state MSD per node, in dB.
    pub msd_delta_db: Vec<f64>,
    pub emse_delta_db: Vec<f64>,
    /// Final ensemble-mean estimate minus the true variance, per node.
    pub estimation_offset: Vec<f64>,
    /// Nodes whose `σ²_n ‖w°‖² / σ²_v` ratio is below 10.
    pub low_ratio_nodes: Vec<usize>,
}

/// Runs the first algorithm of `cfg` twice, with known and with adaptive
/// noise variances (`alpha` from the algorithm entry, default 0.99).
pub fn compare_known_vs_adaptive(cfg: &ExperimentConfig, opts: RunOptions) -> Result<KnownVsAdaptive> {
    let base = cfg
        .algorithms
        .first()
        .ok_or_else(|| SimError::Config("no algorithm to compare".into()))?;
    let mut known = base.clone();
    known.label = format!("{}-known", base.label);
    known.variance = VarianceMode::Known;
    let mut adaptive = base.clone();
    adaptive.label = format!("{}-adaptive", base.label);
    adaptive.variance = VarianceMode::Adaptive;
    adaptive.alpha = Some(base.alpha.unwrap_or(0.99));
    let mut paired = cfg.clone();
    paired.algorithms = vec![known, adaptive];
    let result = run_experiment(&paired, RunOptions { skip_theory: true, ..opts })?;
    let (k, a) = (&result.algorithms[0].curves.steady, &result.algorithms[1].curves.steady);
    let msd_delta_db = k.msd.iter().zip(&a.msd).map(|(x, y)| to_db(*y) - to_db(*x)).collect();
    let emse_delta_db = k.emse.iter().zip(&a.emse).map(|(x, y)| to_db(*y) - to_db(*x)).collect();
    let truth = result.resolved.profile.noise_variances();
    let trace = result.algorithms[1].variance_trace.as_ref().expect("adaptive run records a trace");
    let last = trace.last().expect("horizon >= 1");
    let estimation_offset = last.iter().zip(&truth).map(|(e, t)| e - t).collect();
    let low_ratio_nodes = result
        .resolved
        .profile
        .noise_ratios()
        .iter()
        .enumerate()
        .filter(|(_, r)| **r < 10.0)
        .map(|(k, _)| k)
        .collect();
    Ok(KnownVsAdaptive {
        result,
        msd_delta_db,
        emse_delta_db,
        estimation_offset,
        low_ratio_nodes,
    })
}

/// Ensemble-mean variance estimates next to the true values.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTrace {
    pub label: String,
    /// `[iteration][node]`.
    pub mean: Vec<Vec<f64>>,
    pub truth: Vec<f64>,
}

/// Runs `cfg` and returns the trace of every adaptive algorithm.
pub fn variance_trace(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Vec<VarianceTrace>> {
    let result = run_experiment(cfg, RunOptions { skip_theory: true, ..opts })?;
    let truth = result.resolved.profile.noise_variances();
    let traces: Vec<VarianceTrace> = result
        .algorithms
        .into_iter()
        .filter_map(|a| {
            a.variance_trace.map(|mean| VarianceTrace {
                label: a.spec.label,
                mean,
                truth: truth.clone(),
            })
        })
        .collect();
    if traces.is_empty() {
        return Err(SimError::Config("no adaptive-variance algorithm configured".into()));
    }
    Ok(traces)
}
