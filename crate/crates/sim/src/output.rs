//! CSV files and text reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bcdiff_core::network::{metropolis_weights, Topology};
use bcdiff_core::theory::{to_db, PerformancePrediction, StepSizeBound, TransientPrediction};
use bcdiff_core::datamodel::SystemProfile;

use crate::error::Result;
use crate::harness::{AlgorithmResult, ExperimentResult};
use crate::manifest::{ProfileFile, TopologyFile};

/// `iteration,node_1,...,node_N,network,theory_network`.
pub fn curve_header(n: usize) -> Vec<String> {
    let mut h = vec!["iteration".to_string()];
    h.extend((1..=n).map(|k| format!("node_{k}")));
    h.push("network".into());
    h.push("theory_network".into());
    h
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes one learning-curve file. `theory` may be shorter than `rows` or absent.
pub fn write_curve(path: &Path, rows: &[Vec<f64>], network: &[f64], theory: Option<&[f64]>, db: bool) -> Result<()> {
    let n = rows.first().map_or(0, Vec::len);
    let conv = |x: f64| if db { to_db(x) } else { x };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(curve_header(n))?;
    for (t, row) in rows.iter().enumerate() {
        let mut rec = Vec::with_capacity(n + 3);
        rec.push(t.to_string());
        rec.extend(row.iter().map(|&x| num(conv(x))));
        rec.push(num(conv(network[t])));
        rec.push(theory.and_then(|th| th.get(t)).map_or(String::new(), |&x| num(conv(x))));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Files produced for one experiment, in write order.
pub fn write_experiment(result: &ExperimentResult, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for alg in &result.algorithms {
        let c = &alg.curves;
        let th = alg.theory.as_ref().map(|t| &t.transient);
        for (metric, rows, net, theory) in [
            ("msd", &c.msd, &c.network_msd, th.map(|t| t.network_msd.as_slice())),
            ("emse", &c.emse, &c.network_emse, th.map(|t| t.network_emse.as_slice())),
        ] {
            for db in [false, true] {
                let suffix = if db { "_db" } else { "" };
                let p = out.join(format!("{}_{metric}{suffix}.csv", alg.spec.label));
                write_curve(&p, rows, net, theory, db)?;
                files.push(p);
            }
        }
        if let Some(trace) = &alg.variance_trace {
            let truth = result.resolved.profile.noise_variances();
            let n = truth.len() as f64;
            let net: Vec<f64> = trace.iter().map(|r| r.iter().sum::<f64>() / n).collect();
            let true_mean = vec![truth.iter().sum::<f64>() / n; trace.len()];
            let p = out.join(format!("{}_sigma2.csv", alg.spec.label));
            write_curve(&p, trace, &net, Some(&true_mean), false)?;
            files.push(p);
        }
    }
    let p = out.join("steady_state.csv");
    write_steady_table(&p, &result.algorithms)?;
    files.push(p);
    let p = out.join("summary.txt");
    fs::write(&p, summary(result))?;
    files.push(p);
    let p = out.join("topology.toml");
    fs::write(&p, TopologyFile::from_topology(&result.resolved.topology).to_toml())?;
    files.push(p);
    let p = out.join("profile.toml");
    fs::write(&p, ProfileFile::from_profile(&result.resolved.profile).to_toml())?;
    files.push(p);
    Ok(files)
}

fn write_steady_table(path: &Path, algs: &[AlgorithmResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm", "node", "msd", "msd_db", "msd_se", "emse", "emse_db", "emse_se", "theory_msd_db", "theory_emse_db",
    ])?;
    for a in algs {
        let s = &a.curves.steady;
        let th = a.theory.as_ref().map(|t| &t.steady);
        let n = s.msd.len();
        for k in 0..=n {
            let (node, msd, msd_se, emse, emse_se, tm, te) = if k < n {
                (
                    (k + 1).to_string(),
                    s.msd[k],
                    s.msd_se[k],
                    s.emse[k],
                    s.emse_se[k],
                    th.map(|t| t.msd[k]),
                    th.map(|t| t.emse[k]),
                )
            } else {
                (
                    "network".to_string(),
                    s.network_msd,
                    s.network_msd_se,
                    s.network_emse,
                    s.network_emse_se,
                    th.map(|t| t.network_msd),
                    th.map(|t| t.network_emse),
                )
            };
            let opt = |x: Option<f64>| x.map_or(String::new(), |v| num(to_db(v)));
            w.write_record([
                a.spec.label.clone(),
                node,
                num(msd),
                num(to_db(msd)),
                num(msd_se),
                num(emse),
                num(to_db(emse)),
                num(emse_se),
                opt(tm),
                opt(te),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Human-readable steady-state report.
pub fn summary(result: &ExperimentResult) -> String {
    let cfg = &result.config;
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", cfg.name);
    let _ = writeln!(
        s,
        "seed {}  trials {}  horizon {}  window {}",
        cfg.seed, cfg.trials, cfg.horizon, cfg.steady_state_window
    );
    if let Some(ev) = cfg.tracking {
        let _ = writeln!(s, "tracking: w° scaled by {} at iteration {}", ev.factor, ev.iteration);
    }
    for a in &result.algorithms {
        let st = &a.curves.steady;
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "[{}] trials used {}  diverged {}  converged at {}",
            a.spec.label,
            a.curves.trials,
            a.diverged,
            st.convergence_iteration.map_or("-".to_string(), |i| i.to_string())
        );
        let th = a.theory.as_ref().map(|t| &t.steady);
        let _ = writeln!(
            s,
            "{:>8} {:>12} {:>12} {:>12} {:>12} {:>9} {:>9}",
            "node", "msd_db", "emse_db", "theory_msd", "theory_emse", "d_msd", "d_emse"
        );
        let n = st.msd.len();
        for k in 0..=n {
            let (name, m, e, tm, te) = if k < n {
                ((k + 1).to_string(), st.msd[k], st.emse[k], th.map(|t| t.msd[k]), th.map(|t| t.emse[k]))
            } else {
                ("network".into(), st.network_msd, st.network_emse, th.map(|t| t.network_msd), th.map(|t| t.network_emse))
            };
            let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.3}", to_db(v)));
            let d = |x: Option<f64>, y: f64| x.map_or("-".to_string(), |v| format!("{:+.3}", to_db(y) - to_db(v)));
            let _ = writeln!(
                s,
                "{:>8} {:>12.3} {:>12.3} {:>12} {:>12} {:>9} {:>9}",
                name,
                to_db(m),
                to_db(e),
                f(tm),
                f(te),
                d(tm, m),
                d(te, e)
            );
        }
    }
    s
}

/// Theory-only steady-state table.
pub fn write_prediction(path: &Path, label: &str, p: &PerformancePrediction) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "node", "msd", "msd_db", "emse", "emse_db"])?;
    for k in 0..=p.msd.len() {
        let (node, m, e) = if k < p.msd.len() {
            ((k + 1).to_string(), p.msd[k], p.emse[k])
        } else {
            ("network".into(), p.network_msd, p.network_emse)
        };
        w.write_record([label.to_string(), node, num(m), num(to_db(m)), num(e), num(to_db(e))])?;
    }
    w.flush()?;
    Ok(())
}

/// Theory learning curves in the simulation schema.
pub fn write_transient(out: &Path, label: &str, t: &TransientPrediction) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (metric, rows, net) in [("msd", &t.msd, &t.network_msd), ("emse", &t.emse, &t.network_emse)] {
        for db in [false, true] {
            let suffix = if db { "_db" } else { "" };
            let p = out.join(format!("{label}_theory_{metric}{suffix}.csv"));
            write_curve(&p, rows, net, Some(net), db)?;
            files.push(p);
        }
    }
    Ok(files)
}

pub fn prediction_table(label: &str, p: &PerformancePrediction) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[{label}]");
    let _ = writeln!(s, "{:>8} {:>14} {:>10} {:>14} {:>10}", "node", "msd", "msd_db", "emse", "emse_db");
    for k in 0..=p.msd.len() {
        let (name, m, e) = if k < p.msd.len() {
            ((k + 1).to_string(), p.msd[k], p.emse[k])
        } else {
            ("network".into(), p.network_msd, p.network_emse)
        };
        let _ = writeln!(s, "{:>8} {:>14.6e} {:>10.3} {:>14.6e} {:>10.3}", name, m, to_db(m), e, to_db(e));
    }
    s
}

pub fn bounds_table(bounds: &[StepSizeBound], mu: Option<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>14} {:>14} {:>10}", "node", "compensated", "uncompensated", "mu_inside");
    for (k, b) in bounds.iter().enumerate() {
        let inside = mu.map_or("-".to_string(), |m| (m > 0.0 && m < b.compensated).to_string());
        let _ = writeln!(s, "{:>6} {:>14.6} {:>14.6} {:>10}", k + 1, b.compensated, b.uncompensated, inside);
    }
    s
}

/// Topology, weight-matrix and profile diagnostics.
pub fn inspect_report(topo: &Topology, profile: &SystemProfile, weights: &[(&str, bcdiff_core::network::CombinationMatrix)]) -> String {
    let mut s = String::new();
    let n = topo.num_nodes();
    let _ = writeln!(s, "nodes: {n}");
    let _ = writeln!(s, "links: {}", topo.num_edges());
    let _ = writeln!(s, "connected: {}", topo.is_connected());
    if let Some(r) = topo.comm_radius() {
        let _ = writeln!(s, "radius: {r}");
    }
    let degrees: Vec<String> = (0..n).map(|k| topo.degree(k).to_string()).collect();
    let _ = writeln!(s, "degrees (incl. self): {}", degrees.join(" "));
    let metro = metropolis_weights(topo);
    let doubly = metro.validate().is_ok();
    let _ = writeln!(s, "metropolis doubly stochastic: {}", if doubly { "pass" } else { "FAIL" });
    for (name, w) in weights {
        let rows: Vec<f64> = (0..n).map(|k| w.row_sum(k)).collect();
        let cols: Vec<f64> = (0..n).map(|k| w.col_sum(k)).collect();
        let dev = |v: &[f64]| v.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
        let _ = writeln!(
            s,
            "{name}: {:?}, max |row sum - 1| = {:.3e}, max |col sum - 1| = {:.3e}, conforms to topology: {}",
            w.kind(),
            dev(&rows),
            dev(&cols),
            w.conforms_to(topo).is_ok()
        );
    }
    let _ = writeln!(s, "field: {:?}  M = {}  |w°|² = {}", profile.field(), profile.dim(), profile.w_o_norm_sq());
    let _ = writeln!(s, "{:>6} {:>10} {:>10} {:>10} {:>12}", "node", "sigma2_v", "tr_ru", "sigma2_n", "noise_ratio");
    for (k, (node, r)) in profile.nodes().iter().zip(profile.noise_ratios()).enumerate() {
        let _ = writeln!(
            s,
            "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>12.2}",
            k + 1,
            node.sigma2_v,
            node.r_u.trace().re,
            node.sigma2_n,
            r
        );
    }
    let min = profile.noise_ratios().into_iter().fold(f64::INFINITY, f64::min);
    let _ = writeln!(s, "min sigma2_n |w°|² / sigma2_v: {min:.2} ({})", if min >= 10.0 { ">= 10" } else { "< 10" });
    s
}
