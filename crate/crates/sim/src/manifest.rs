//! Experiment manifests (TOML) and the built-in presets.

use std::path::{Path, PathBuf};

use bcdiff_core::algorithms::{AlgorithmConfig, VarianceSource};
use bcdiff_core::datamodel::{
    complex_profile, table1_profile_with, Field, NodeProfile, SystemProfile, Table1Reading,
};
use bcdiff_core::network::{
    identity_combination, metropolis_weights, random_geometric_topology, relative_variance_weights,
    CombinationMatrix, Topology,
};
use bcdiff_core::{Complex64, ComplexMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Names of the built-in presets, in display order.
pub const PRESETS: &[&str] = &["fig3", "fig4", "fig5-6", "fig7-8", "fig9", "fig10"];

/// Manifest text of a built-in preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5-6" => include_str!("../presets/fig5-6.toml"),
        "fig7-8" => include_str!("../presets/fig7-8.toml"),
        "fig9" => include_str!("../presets/fig9.toml"),
        "fig10" => include_str!("../presets/fig10.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let src = preset_source(name).ok_or_else(|| {
        SimError::Config(format!("unknown experiment '{name}' (known: {})", PRESETS.join(", ")))
    })?;
    ExperimentConfig::from_toml(src, None)
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed; trial `t` draws its data from a seed derived from `(seed, t)`.
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    #[serde(default = "default_window")]
    pub steady_state_window: usize,
    pub profile: ProfileSpec,
    pub topology: TopologySpec,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<TrackingEvent>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_window() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum ProfileSpec {
    Table1 {
        #[serde(default)]
        reading: Table1Reading,
    },
    Complex,
    /// Profile stored in a separate TOML file.
    File { path: PathBuf },
    Inline(ProfileFile),
}

/// Serializable profile: parameter vector plus per-node statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub field: Field,
    pub w_o_re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_o_im: Option<Vec<f64>>,
    #[serde(rename = "node")]
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub sigma2_v: f64,
    pub sigma2_n: f64,
    /// `R_u = sigma2_u I`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_u: Option<f64>,
    /// Row-major real part of a general `R_u`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_u_re: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_u_im: Option<Vec<f64>>,
}

impl ProfileFile {
    pub fn to_profile(&self) -> Result<SystemProfile> {
        let m = self.w_o_re.len();
        let im = self.w_o_im.clone().unwrap_or_else(|| vec![0.0; m]);
        if im.len() != m {
            return Err(SimError::Config("w_o_re and w_o_im lengths differ".into()));
        }
        let w_o = self.w_o_re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let r_u = match (&n.sigma2_u, &n.r_u_re) {
                    (Some(s), None) => ComplexMatrix::identity(m).scale(Complex64::new(*s, 0.0)),
                    (None, Some(re)) => {
                        let im = n.r_u_im.clone().unwrap_or_else(|| vec![0.0; m * m]);
                        if re.len() != m * m || im.len() != m * m {
                            return Err(SimError::Config(format!("node {}: r_u must have {} entries", k + 1, m * m)));
                        }
                        ComplexMatrix::from_vec(m, m, re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect())?
                    }
                    _ => {
                        return Err(SimError::Config(format!(
                            "node {}: give exactly one of sigma2_u or r_u_re",
                            k + 1
                        )))
                    }
                };
                Ok(NodeProfile {
                    sigma2_v: n.sigma2_v,
                    r_u,
                    sigma2_n: n.sigma2_n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemProfile::new(w_o, nodes, self.field)?)
    }

    pub fn from_profile(p: &SystemProfile) -> Self {
        let m = p.dim();
        let complex = p.field() == Field::Complex;
        let nodes = p
            .nodes()
            .iter()
            .map(|n| {
                let isotropic = n.r_u == ComplexMatrix::identity(m).scale(n.r_u[(0, 0)]) && n.r_u[(0, 0)].im == 0.0;
                if isotropic {
                    NodeSpec {
                        sigma2_v: n.sigma2_v,
                        sigma2_n: n.sigma2_n,
                        sigma2_u: Some(n.r_u[(0, 0)].re),
                        r_u_re: None,
                        r_u_im: None,
                    }
                } else {
                    NodeSpec {
                        sigma2_v: n.sigma2_v,
                        sigma2_n: n.sigma2_n,
                        sigma2_u: None,
                        r_u_re: Some(n.r_u.as_slice().iter().map(|z| z.re).collect()),
                        r_u_im: complex.then(|| n.r_u.as_slice().iter().map(|z| z.im).collect()),
                    }
                }
            })
            .collect();
        Self {
            field: p.field(),
            w_o_re: p.w_o().iter().map(|z| z.re).collect(),
            w_o_im: complex.then(|| p.w_o().iter().map(|z| z.im).collect()),
            nodes,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "kind")]
pub enum TopologySpec {
    /// Uniform random layout on the unit square, redrawn until connected.
    Random { nodes: usize, radius: f64, seed: u64 },
    /// Topology stored in a separate TOML file.
    File { path: PathBuf },
}

/// Serializable topology: layout and links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Node coordinates; with `radius`, links are recomputed from them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<[f64; 2]>>,
    /// One-based undirected links, used when positions are absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

impl TopologyFile {
    pub fn to_topology(&self) -> Result<Topology> {
        match (&self.positions, self.radius, &self.edges) {
            (Some(pos), Some(r), _) => {
                if pos.len() != self.nodes {
                    return Err(SimError::Config("positions length differs from node count".into()));
                }
                Ok(Topology::from_positions(pos.clone(), r)?)
            }
            (_, _, Some(edges)) => {
                let mut e = Vec::with_capacity(edges.len());
                for &[a, b] in edges {
                    if a == 0 || b == 0 {
                        return Err(SimError::Config("edges are one-based".into()));
                    }
                    e.push((a - 1, b - 1));
                }
                Ok(Topology::from_edges(self.nodes, &e)?)
            }
            _ => Err(SimError::Config("topology file needs positions+radius or edges".into())),
        }
    }

    pub fn from_topology(t: &Topology) -> Self {
        let edges = (0..t.num_nodes())
            .flat_map(|a| t.neighbors(a).iter().filter(move |&&b| b > a).map(move |&b| [a + 1, b + 1]))
            .collect();
        Self {
            nodes: t.num_nodes(),
            radius: t.comm_radius(),
            seed: t.seed(),
            positions: t.positions().map(|p| p.to_vec()),
            edges: Some(edges),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("topology serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    Atc,
    Cta,
    NonCooperative,
    Centralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    Metropolis,
    RelativeVariance,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// Uncompensated (standard) LMS.
    None,
    Known,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub label: String,
    pub kind: AlgorithmKind,
    #[serde(default = "default_a")]
    pub a: WeightRule,
    #[serde(default = "default_c")]
    pub c: WeightRule,
    pub mu: f64,
    pub variance: VarianceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

fn default_a() -> WeightRule {
    WeightRule::RelativeVariance
}

fn default_c() -> WeightRule {
    WeightRule::Metropolis
}

/// Sudden change `w° → factor · w°` at `iteration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingEvent {
    pub iteration: u64,
    pub factor: f64,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| SimError::Read {
        path: path.to_path_buf(),
        source,
    })
}

impl ExperimentConfig {
    pub fn from_toml(src: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(src)?;
        cfg.base_dir = base_dir.map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(SimError::Config("trials must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be at least 1".into()));
        }
        if self.steady_state_window == 0 || self.steady_state_window > self.horizon {
            return Err(SimError::Config(format!(
                "steady_state_window must lie in 1..={}, got {}",
                self.horizon, self.steady_state_window
            )));
        }
        if self.algorithms.is_empty() {
            return Err(SimError::Config("at least one [[algorithm]] is required".into()));
        }
        let mut labels = std::collections::BTreeSet::new();
        for a in &self.algorithms {
            if !labels.insert(a.label.as_str()) {
                return Err(SimError::Config(format!("duplicate algorithm label '{}'", a.label)));
            }
            if a.label.is_empty() || !a.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(SimError::Config(format!(
                    "label '{}' must be non-empty and use only letters, digits, '-' and '_'",
                    a.label
                )));
            }
            if a.variance == VarianceMode::Adaptive && a.alpha.is_none() {
                return Err(SimError::Config(format!("algorithm '{}' is adaptive but has no alpha", a.label)));
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn build_profile(&self) -> Result<SystemProfile> {
        match &self.profile {
            ProfileSpec::Table1 { reading } => Ok(table1_profile_with(*reading)),
            ProfileSpec::Complex => Ok(complex_profile()),
            ProfileSpec::File { path } => {
                let f: ProfileFile = toml::from_str(&read(&self.resolve(path))?)?;
                f.to_profile()
            }
            ProfileSpec::Inline(f) => f.to_profile(),
        }
    }

    pub fn build_topology(&self) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Random { nodes, radius, seed } => Ok(random_geometric_topology(*nodes, *radius, *seed)?),
            TopologySpec::File { path } => {
                let f: TopologyFile = toml::from_str(&read(&self.resolve(path))?)?;
                f.to_topology()
            }
        }
    }

    /// Profile, topology and one estimator configuration per algorithm.
    pub fn build(&self) -> Result<ResolvedExperiment> {
        let profile = self.build_profile()?;
        let topology = self.build_topology()?;
        if topology.num_nodes() != profile.num_nodes() {
            return Err(SimError::Config(format!(
                "topology has {} nodes but the profile has {}",
                topology.num_nodes(),
                profile.num_nodes()
            )));
        }
        let algorithms = self
            .algorithms
            .iter()
            .map(|a| Ok((a.clone(), a.build(&profile, &topology)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedExperiment {
            profile,
            topology,
            algorithms,
        })
    }
}

/// Weight matrix for a rule on a topology.
pub fn weights(rule: WeightRule, profile: &SystemProfile, topo: &Topology) -> Result<CombinationMatrix> {
    Ok(match rule {
        WeightRule::Metropolis => metropolis_weights(topo),
        WeightRule::RelativeVariance => relative_variance_weights(topo, &profile.noise_variances())?,
        WeightRule::Identity => identity_combination(topo.num_nodes()),
    })
}

impl AlgorithmSpec {
    pub fn variance_source(&self, profile: &SystemProfile) -> VarianceSource {
        match self.variance {
            VarianceMode::None => VarianceSource::Uncompensated,
            VarianceMode::Known => VarianceSource::Known(profile.noise_variances()),
            VarianceMode::Adaptive => VarianceSource::adaptive(self.alpha.unwrap_or(0.99)),
        }
    }

    pub fn build(&self, profile: &SystemProfile, topo: &Topology) -> Result<AlgorithmConfig> {
        let n = topo.num_nodes();
        let var = self.variance_source(profile);
        let a = weights(self.a, profile, topo)?;
        let c = weights(self.c, profile, topo)?;
        if !c.kind().is_right() {
            return Err(SimError::Config(format!(
                "algorithm '{}': C must be right-stochastic; relative-variance weights are not",
                self.label
            )));
        }
        let cfg = match self.kind {
            AlgorithmKind::Atc => AlgorithmConfig::atc(a, c, self.mu, var),
            AlgorithmKind::Cta => AlgorithmConfig::cta(a, c, self.mu, var),
            AlgorithmKind::NonCooperative => AlgorithmConfig::non_cooperative(n, self.mu, var),
            AlgorithmKind::Centralized => AlgorithmConfig::centralized(n, self.mu, var),
        }?;
        Ok(cfg)
    }
}

/// Experiment with every object constructed.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub profile: SystemProfile,
    pub topology: Topology,
    pub algorithms: Vec<(AlgorithmSpec, AlgorithmConfig)>,
}
