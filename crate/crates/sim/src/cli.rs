//! Command-line interface: `run`, `predict`, `bounds` and `inspect`.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use bcdiff_core::algorithms::VarianceSource;
use bcdiff_core::datamodel::SystemProfile;
use bcdiff_core::network::{metropolis_weights, relative_variance_weights, Topology};
use bcdiff_core::theory::step_size_bounds;
use clap::{Args, Parser, Subcommand};

use crate::error::{Result, SimError};
use crate::harness::{run_experiment, theory_overlay, RunOptions};
use crate::manifest::{preset, weights, AlgorithmKind, ExperimentConfig, WeightRule};
use crate::output;

const EXPERIMENTS: [&str; 7] = ["fig3", "fig4", "fig5-6", "fig7-8", "fig9", "fig10", "custom"];

#[derive(Debug, Parser)]
#[command(name = "bcdiff", version, about = "Bias-compensated diffusion LMS experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo experiment and write learning curves.
    Run(RunArgs),
    /// Theoretical steady-state and transient performance, no simulation.
    Predict(PredictArgs),
    /// Per-node step-size bounds for mean stability.
    Bounds(BoundsArgs),
    /// Topology, combination-weight and noise-profile diagnostics.
    Inspect(InspectArgs),
}

/// Where the experiment comes from. Defaults to the `fig3` preset.
#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Built-in preset; `custom` requires --config.
    #[arg(long, value_name = "NAME", value_parser = EXPERIMENTS)]
    pub experiment: Option<String>,
    /// Experiment manifest (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the manifest.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    /// Number of independent trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Iterations per trial.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (speed only; results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub source: Source,
    /// Step size for every node, overriding the manifest.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Length of the transient curves.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub source: Source,
    /// Step size to check against the bounds.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub source: Source,
    /// Keep only the first N nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
}

/// Resolves `--experiment`, `--config` and `--seed` into a manifest.
pub fn load(src: &Source) -> Result<ExperimentConfig> {
    let mut cfg = match (src.experiment.as_deref(), &src.config) {
        (None, None) => preset("fig3")?,
        (None | Some("custom"), Some(path)) => ExperimentConfig::from_path(path)?,
        (Some("custom"), None) => return Err(SimError::Config("--experiment custom requires --config".into())),
        (Some(name), Some(_)) => {
            return Err(SimError::Config(format!(
                "--experiment {name} conflicts with --config; use --experiment custom"
            )))
        }
        (Some(name), None) => preset(name)?,
    };
    if let Some(seed) = src.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs a parsed command and returns the text for standard output.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<String> {
    let mut cfg = load(&args.source)?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
        cfg.steady_state_window = cfg.steady_state_window.min(h);
    }
    if args.threads == Some(0) {
        return Err(SimError::Config("--threads must be at least 1".into()));
    }
    let result = run_experiment(
        &cfg,
        RunOptions {
            threads: args.threads,
            skip_theory: false,
        },
    )?;
    let files = output::write_experiment(&result, &args.out)?;
    let mut text = output::summary(&result);
    let _ = writeln!(text);
    for f in &files {
        let _ = writeln!(text, "wrote {}", f.display());
    }
    if let Some(a) = result.algorithms.iter().find(|a| a.diverged > 0) {
        eprint!("{text}");
        return Err(SimError::Diverged {
            label: a.spec.label.clone(),
            diverged: a.diverged,
            trials: cfg.trials,
        });
    }
    Ok(text)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let mut cfg = load(&args.source)?;
    if let Some(mu) = args.mu {
        cfg.algorithms.iter_mut().for_each(|a| a.mu = mu);
    }
    let horizon = args.horizon.unwrap_or(cfg.horizon);
    let resolved = cfg.build()?;
    fs::create_dir_all(&args.out)?;
    let mut text = String::new();
    let mut files = Vec::new();
    for (spec, acfg) in &resolved.algorithms {
        let mut known = acfg.clone();
        known.variance = match &acfg.variance {
            VarianceSource::Uncompensated => {
                let _ = writeln!(text, "[{}] skipped: the model covers bias-compensated diffusion only", spec.label);
                continue;
            }
            _ => VarianceSource::Known(resolved.profile.noise_variances()),
        };
        let Some(overlay) = theory_overlay(&resolved.profile, &known, horizon)? else {
            let _ = writeln!(text, "[{}] skipped: no diffusion model for this strategy", spec.label);
            continue;
        };
        let p = args.out.join(format!("{}_theory_steady_state.csv", spec.label));
        output::write_prediction(&p, &spec.label, &overlay.steady)?;
        files.push(p);
        files.extend(output::write_transient(&args.out, &spec.label, &overlay.transient)?);
        text.push_str(&output::prediction_table(&spec.label, &overlay.steady));
    }
    let _ = writeln!(text);
    for f in &files {
        let _ = writeln!(text, "wrote {}", f.display());
    }
    Ok(text)
}

pub fn cmd_bounds(args: &BoundsArgs) -> Result<String> {
    let cfg = load(&args.source)?;
    let profile = cfg.build_profile()?;
    let topo = cfg.build_topology()?;
    check_sizes(&profile, &topo)?;
    let spec = cfg.algorithms.iter().find(|a| matches!(a.kind, AlgorithmKind::Atc | AlgorithmKind::Cta));
    let (rule, label) = match (spec, cfg.algorithms.first()) {
        (Some(s), _) => (s.c, s.label.as_str()),
        (None, Some(s)) if s.kind == AlgorithmKind::NonCooperative => (WeightRule::Identity, s.label.as_str()),
        _ => (WeightRule::Metropolis, "default"),
    };
    let c = weights(rule, &profile, &topo)?;
    let bounds = step_size_bounds(&profile, &c)?;
    let mu = args.mu.or(spec.map(|s| s.mu));
    let mut text = format!("C: {rule:?} (from '{label}')\n");
    if let Some(m) = mu {
        let _ = writeln!(text, "mu: {m}");
    }
    text.push_str(&output::bounds_table(&bounds, mu));
    Ok(text)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<String> {
    let cfg = load(&args.source)?;
    let mut profile = cfg.build_profile()?;
    let mut topo = cfg.build_topology()?;
    check_sizes(&profile, &topo)?;
    if let Some(n) = args.nodes {
        if n == 0 || n > topo.num_nodes() {
            return Err(SimError::Config(format!("--nodes must lie in 1..={}", topo.num_nodes())));
        }
        (profile, topo) = truncate(&profile, &topo, n)?;
    }
    let metro = metropolis_weights(&topo);
    let rel = relative_variance_weights(&topo, &profile.noise_variances())?;
    Ok(output::inspect_report(&topo, &profile, &[("metropolis", metro), ("relative-variance", rel)]))
}

fn check_sizes(profile: &SystemProfile, topo: &Topology) -> Result<()> {
    if profile.num_nodes() != topo.num_nodes() {
        return Err(SimError::Config(format!(
            "topology has {} nodes but the profile has {}",
            topo.num_nodes(),
            profile.num_nodes()
        )));
    }
    Ok(())
}

/// The subnetwork on nodes `0..n`.
pub fn truncate(profile: &SystemProfile, topo: &Topology, n: usize) -> Result<(SystemProfile, Topology)> {
    let p = SystemProfile::new(profile.w_o().to_vec(), profile.nodes()[..n].to_vec(), profile.field())?;
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| topo.neighbors(a).iter().filter(move |&&b| b > a && b < n).map(move |&b| (a, b)))
        .collect();
    Ok((p, Topology::from_edges(n, &edges)?))
}
