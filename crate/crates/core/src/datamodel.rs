//! Signal and noise profiles and the synthetic observation stream
//! `z = u + n`, `d = u w° + v`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blockmat::{cholesky_psd, ComplexMatrix};
use crate::error::{Error, Result};
use crate::rng::{node_stream, StreamKind};

const TABLE1_CSV: &str = include_str!("../data/table1.csv");

/// Regression-noise scale applied to the reference noise column in [`complex_profile`].
pub const COMPLEX_NOISE_SCALE: f64 = 3.0;

/// Regressor-to-noise energy ratio `Tr(R_u) / (M σ²_n)` of [`complex_profile`].
pub const COMPLEX_ENERGY_RATIO: f64 = 20.0;

/// Scalar field of the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Field {
    Real,
    /// Circular complex Gaussian.
    Complex,
}

impl Field {
    /// Fourth-moment factor: 2 for real data, 1 for circular complex data.
    pub fn beta(self) -> f64 {
        match self {
            Field::Real => 2.0,
            Field::Complex => 1.0,
        }
    }
}

/// Statistics of a single node.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeProfile {
    /// Output-noise variance.
    pub sigma2_v: f64,
    /// Regressor covariance `E[u* u]`.
    pub r_u: ComplexMatrix,
    /// Regression-noise variance (per tap).
    pub sigma2_n: f64,
}

impl NodeProfile {
    /// Node with `R_u = sigma2_u I_M`.
    pub fn isotropic(m: usize, sigma2_v: f64, sigma2_u: f64, sigma2_n: f64) -> Self {
        Self {
            sigma2_v,
            r_u: ComplexMatrix::identity(m).scale(Complex64::new(sigma2_u, 0.0)),
            sigma2_n,
        }
    }
}

/// Parameter vector, per-node statistics and scalar field.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemProfile {
    w_o: Vec<Complex64>,
    nodes: Vec<NodeProfile>,
    field: Field,
}

impl SystemProfile {
    pub fn new(w_o: Vec<Complex64>, nodes: Vec<NodeProfile>, field: Field) -> Result<Self> {
        let m = w_o.len();
        if m == 0 || nodes.is_empty() {
            return Err(Error::InvalidParameter("profile needs M >= 1 and at least one node".into()));
        }
        if field == Field::Real && w_o.iter().any(|w| w.im != 0.0) {
            return Err(Error::InvalidParameter("real-field profile has a complex w°".into()));
        }
        for (k, node) in nodes.iter().enumerate() {
            if node.r_u.shape() != (m, m) {
                return Err(Error::DimensionMismatch {
                    expected: (m, m),
                    found: node.r_u.shape(),
                });
            }
            for value in [node.sigma2_v, node.sigma2_n] {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(Error::NonPositiveVariance { node: k, value });
                }
            }
            if !node.r_u.is_hermitian(1e-12 * (1.0 + node.r_u.max_abs())) {
                return Err(Error::InvalidParameter(format!("R_u at node {k} is not Hermitian")));
            }
            if field == Field::Real && node.r_u.as_slice().iter().any(|z| z.im != 0.0) {
                return Err(Error::InvalidParameter(format!("real-field R_u at node {k} is complex")));
            }
            cholesky_psd(&node.r_u)?;
        }
        Ok(Self { w_o, nodes, field })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Parameter dimension `M`.
    pub fn dim(&self) -> usize {
        self.w_o.len()
    }

    pub fn w_o(&self) -> &[Complex64] {
        &self.w_o
    }

    pub fn w_o_norm_sq(&self) -> f64 {
        self.w_o.iter().map(|w| w.norm_sqr()).sum()
    }

    pub fn nodes(&self) -> &[NodeProfile] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &NodeProfile {
        &self.nodes[k]
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn beta(&self) -> f64 {
        self.field.beta()
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.sigma2_n).collect()
    }

    pub fn output_noise_variances(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.sigma2_v).collect()
    }

    /// Per-node `σ²_n ‖w°‖² / σ²_v`; large values make the online noise
    /// estimator nearly unbiased. Infinite where `σ²_v = 0`.
    pub fn noise_ratios(&self) -> Vec<f64> {
        let w2 = self.w_o_norm_sq();
        self.nodes
            .iter()
            .map(|n| {
                if n.sigma2_v == 0.0 {
                    f64::INFINITY
                } else {
                    n.sigma2_n * w2 / n.sigma2_v
                }
            })
            .collect()
    }

    /// Same statistics with a different parameter vector.
    pub fn with_w_o(&self, w_o: Vec<Complex64>) -> Result<Self> {
        Self::new(w_o, self.nodes.clone(), self.field)
    }

    /// Same profile with every regression-noise variance set to zero.
    pub fn without_regression_noise(&self) -> Self {
        let mut p = self.clone();
        for n in p.nodes.iter_mut() {
            n.sigma2_n = 0.0;
        }
        p
    }

    /// Same profile with every output-noise variance multiplied by `factor`.
    pub fn scale_output_noise(&self, factor: f64) -> Self {
        let mut p = self.clone();
        for n in p.nodes.iter_mut() {
            n.sigma2_v *= factor;
        }
        p
    }
}

/// One row of the reference power profile ([`table1_rows`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub sigma2_v: f64,
    pub trace_ru: f64,
    pub sigma2_n: f64,
}

/// The 20-node power profile shipped in `data/table1.csv`.
pub fn table1_rows() -> Vec<Table1Row> {
    TABLE1_CSV
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>().expect("embedded table is well formed"))
                .collect();
            Table1Row {
                sigma2_v: cols[1],
                trace_ru: cols[2],
                sigma2_n: cols[3],
            }
        })
        .collect()
}

/// How the `Tr(R_u)` column of the reference profile maps to a covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Table1Reading {
    /// Column is the trace: `R_u = (Tr / M) I`.
    #[default]
    Trace,
    /// Column is the per-tap variance: `R_u = Tr · I`.
    PerTap,
}

/// Real 20-node, `M = 2` profile with `w° = [1, 1]ᵀ/√2`.
pub fn table1_profile() -> SystemProfile {
    table1_profile_with(Table1Reading::Trace)
}

pub fn table1_profile_with(reading: Table1Reading) -> SystemProfile {
    let m = 2;
    let w = core::f64::consts::FRAC_1_SQRT_2;
    let nodes = table1_rows()
        .into_iter()
        .map(|r| {
            let sigma2_u = match reading {
                Table1Reading::Trace => r.trace_ru / m as f64,
                Table1Reading::PerTap => r.trace_ru,
            };
            NodeProfile::isotropic(m, r.sigma2_v, sigma2_u, r.sigma2_n)
        })
        .collect();
    SystemProfile::new(vec![Complex64::new(w, 0.0); m], nodes, Field::Real).expect("table profile is valid")
}

/// Complex 20-node, `M = 5` profile with `w° = (2 + 2j)·1` and
/// `Tr(R_u) = 20 M σ²_n` at every node. Output noise follows the reference profile; the
/// regression noise is the reference column times [`COMPLEX_NOISE_SCALE`].
pub fn complex_profile() -> SystemProfile {
    let m = 5;
    let nodes = table1_rows()
        .into_iter()
        .map(|r| {
            let sigma2_n = COMPLEX_NOISE_SCALE * r.sigma2_n;
            NodeProfile::isotropic(m, r.sigma2_v, COMPLEX_ENERGY_RATIO * sigma2_n, sigma2_n)
        })
        .collect();
    SystemProfile::new(vec![Complex64::new(2.0, 2.0); m], nodes, Field::Complex).expect("complex profile is valid")
}

/// Hidden variables behind one node's observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latent<'a> {
    pub u: &'a [Complex64],
    pub n: &'a [Complex64],
    pub v: Complex64,
}

/// Observations of all nodes at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    m: usize,
    z: Vec<Complex64>,
    d: Vec<Complex64>,
    u: Vec<Complex64>,
    n: Vec<Complex64>,
    v: Vec<Complex64>,
    w_o: Vec<Complex64>,
}

impl ObservationBatch {
    pub fn zeros(num_nodes: usize, m: usize) -> Self {
        Self {
            m,
            z: vec![Complex64::new(0.0, 0.0); num_nodes * m],
            d: vec![Complex64::new(0.0, 0.0); num_nodes],
            u: vec![Complex64::new(0.0, 0.0); num_nodes * m],
            n: vec![Complex64::new(0.0, 0.0); num_nodes * m],
            v: vec![Complex64::new(0.0, 0.0); num_nodes],
            w_o: vec![Complex64::new(0.0, 0.0); m],
        }
    }

    /// Builds a batch directly from regressors and outputs.
    pub fn from_parts(m: usize, z: Vec<Complex64>, d: Vec<Complex64>) -> Result<Self> {
        if z.len() != d.len() * m {
            return Err(Error::DimensionMismatch {
                expected: (d.len(), m),
                found: (z.len(), 1),
            });
        }
        let n = d.len();
        Ok(Self {
            m,
            u: z.clone(),
            n: vec![Complex64::new(0.0, 0.0); n * m],
            v: vec![Complex64::new(0.0, 0.0); n],
            z,
            d,
            w_o: vec![Complex64::new(0.0, 0.0); m],
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.d.len()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Noisy regressor of node `k`.
    pub fn z(&self, k: usize) -> &[Complex64] {
        &self.z[k * self.m..(k + 1) * self.m]
    }

    pub fn d(&self, k: usize) -> Complex64 {
        self.d[k]
    }

    /// Parameter vector that generated `d`.
    pub fn w_o(&self) -> &[Complex64] {
        &self.w_o
    }

    /// Latent regressor and noises of node `k`, intended for oracle checks.
    pub fn latent(&self, k: usize) -> Latent<'_> {
        Latent {
            u: &self.u[k * self.m..(k + 1) * self.m],
            n: &self.n[k * self.m..(k + 1) * self.m],
            v: self.v[k],
        }
    }
}

struct NodeRng {
    regressor: ChaCha8Rng,
    regression_noise: ChaCha8Rng,
    output_noise: ChaCha8Rng,
    /// `L` with `L L* = R_u`.
    chol: ComplexMatrix,
}

/// Deterministic i.i.d. observation stream for a profile.
pub struct DataStream {
    profile: SystemProfile,
    seed: u64,
    iteration: u64,
    w_o: Vec<Complex64>,
    change: Option<(Vec<Complex64>, u64)>,
    rngs: Vec<NodeRng>,
    white: Vec<Complex64>,
}

impl DataStream {
    pub fn new(profile: SystemProfile, seed: u64) -> Self {
        let rngs = profile
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, node)| NodeRng {
                regressor: node_stream(seed, k, StreamKind::Regressor),
                regression_noise: node_stream(seed, k, StreamKind::RegressionNoise),
                output_noise: node_stream(seed, k, StreamKind::OutputNoise),
                chol: cholesky_psd(&node.r_u).expect("validated profile"),
            })
            .collect();
        Self {
            w_o: profile.w_o().to_vec(),
            white: vec![Complex64::new(0.0, 0.0); profile.dim()],
            profile,
            seed,
            iteration: 0,
            change: None,
            rngs,
        }
    }

    pub fn profile(&self) -> &SystemProfile {
        &self.profile
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the next iteration to be drawn.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Parameter vector that the next draw will use.
    pub fn current_w_o(&self) -> &[Complex64] {
        match &self.change {
            Some((w, at)) if self.iteration >= *at => w,
            _ => &self.w_o,
        }
    }

    /// From iteration `at_iteration` onward, outputs are generated with `new_w_o`.
    pub fn change_parameters(&mut self, new_w_o: Vec<Complex64>, at_iteration: u64) -> Result<()> {
        if new_w_o.len() != self.profile.dim() {
            return Err(Error::DimensionMismatch {
                expected: (self.profile.dim(), 1),
                found: (new_w_o.len(), 1),
            });
        }
        if let Some((w, at)) = self.change.take() {
            if self.iteration >= at {
                self.w_o = w;
            }
        }
        self.change = Some((new_w_o, at_iteration));
        Ok(())
    }

    pub fn draw(&mut self) -> ObservationBatch {
        let mut batch = ObservationBatch::zeros(self.profile.num_nodes(), self.profile.dim());
        self.draw_into(&mut batch);
        batch
    }

    /// Fills `batch` with the next iteration's observations.
    pub fn draw_into(&mut self, batch: &mut ObservationBatch) {
        let m = self.profile.dim();
        let field = self.profile.field();
        let w_o = match &self.change {
            Some((w, at)) if self.iteration >= *at => w.as_slice(),
            _ => self.w_o.as_slice(),
        };
        batch.w_o.clear();
        batch.w_o.extend_from_slice(w_o);
        for (k, (rng, node)) in self.rngs.iter_mut().zip(self.profile.nodes()).enumerate() {
            for x in self.white.iter_mut() {
                *x = gaussian(&mut rng.regressor, field);
            }
            let u = &mut batch.u[k * m..(k + 1) * m];
            for (j, uj) in u.iter_mut().enumerate() {
                // row vector u = x L*
                *uj = (0..=j).map(|i| self.white[i] * rng.chol[(j, i)].conj()).sum();
            }
            let sn = libm::sqrt(node.sigma2_n);
            let n = &mut batch.n[k * m..(k + 1) * m];
            for nj in n.iter_mut() {
                *nj = gaussian(&mut rng.regression_noise, field) * sn;
            }
            let v = gaussian(&mut rng.output_noise, field) * libm::sqrt(node.sigma2_v);
            batch.v[k] = v;
            let u = &batch.u[k * m..(k + 1) * m];
            let n = &batch.n[k * m..(k + 1) * m];
            for ((zj, uj), nj) in batch.z[k * m..(k + 1) * m].iter_mut().zip(u).zip(n) {
                *zj = uj + nj;
            }
            batch.d[k] = u.iter().zip(w_o).map(|(a, b)| a * b).sum::<Complex64>() + v;
        }
        self.iteration += 1;
    }
}

/// Unit-variance Gaussian; complex draws are `(x + jy)/√2`.
fn gaussian(rng: &mut ChaCha8Rng, field: Field) -> Complex64 {
    match field {
        Field::Real => Complex64::new(rng.sample(StandardNormal), 0.0),
        Field::Complex => {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            Complex64::new(x, y) * core::f64::consts::FRAC_1_SQRT_2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_by_field() {
        assert_eq!(Field::Real.beta(), 2.0);
        assert_eq!(Field::Complex.beta(), 1.0);
    }

    #[test]
    fn table1_endpoints() {
        let p = table1_profile();
        assert_eq!(p.num_nodes(), 20);
        assert_eq!(p.dim(), 2);
        let n1 = p.node(0);
        assert_eq!(n1.sigma2_v, 0.0230);
        assert_abs_diff_eq!(n1.r_u.trace().re, 0.3000, epsilon = 1e-15);
        assert_eq!(n1.sigma2_n, 0.0170);
        let n20 = p.node(19);
        assert_eq!(n20.sigma2_v, 0.0460);
        assert_abs_diff_eq!(n20.r_u.trace().re, 0.8000, epsilon = 1e-15);
        assert_eq!(n20.sigma2_n, 0.0160);
        let w = 1.0 / libm::sqrt(2.0);
        for x in p.w_o() {
            assert_abs_diff_eq!(x.re, w, epsilon = 1e-15);
            assert_eq!(x.im, 0.0);
        }
        assert_eq!(p.field(), Field::Real);

        let per_tap = table1_profile_with(Table1Reading::PerTap);
        assert_abs_diff_eq!(per_tap.node(0).r_u.trace().re, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn complex_profile_energy() {
        let p = complex_profile();
        assert_abs_diff_eq!(p.w_o_norm_sq(), 40.0, epsilon = 1e-12);
        assert_eq!(p.field(), Field::Complex);
        for node in p.nodes() {
            let ratio = node.r_u.trace().re / (p.dim() as f64 * node.sigma2_n);
            assert_abs_diff_eq!(ratio, 20.0, epsilon = 1e-12);
        }
        assert!(p.noise_ratios().iter().all(|&r| r >= 10.0));
    }

    #[test]
    fn noiseless_observations_are_exact() {
        let nodes = vec![NodeProfile::isotropic(3, 0.0, 1.0, 0.0); 2];
        let w = vec![Complex64::new(1.0, 0.0), Complex64::new(-2.0, 0.0), Complex64::new(0.5, 0.0)];
        let p = SystemProfile::new(w.clone(), nodes, Field::Real).unwrap();
        let mut s = DataStream::new(p, 4);
        for _ in 0..5 {
            let b = s.draw();
            for k in 0..2 {
                assert_eq!(b.z(k), b.latent(k).u);
                let dot: Complex64 = b.z(k).iter().zip(&w).map(|(a, b)| a * b).sum();
                assert_eq!(b.d(k), dot);
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = DataStream::new(table1_profile(), 99);
        let mut b = DataStream::new(table1_profile(), 99);
        let mut c = DataStream::new(table1_profile(), 100);
        for _ in 0..3 {
            let (x, y, z) = (a.draw(), b.draw(), c.draw());
            assert_eq!(x, y);
            assert_ne!(x, z);
        }
    }

    #[test]
    fn parameter_change_takes_effect() {
        let p = table1_profile();
        let doubled: Vec<Complex64> = p.w_o().iter().map(|w| w * 2.0).collect();
        let mut s = DataStream::new(p.clone(), 1);
        s.change_parameters(doubled.clone(), 2).unwrap();
        assert_eq!(s.draw().w_o(), p.w_o());
        assert_eq!(s.draw().w_o(), p.w_o());
        assert_eq!(s.draw().w_o(), doubled.as_slice());

        let mut at0 = DataStream::new(p.clone(), 5);
        at0.change_parameters(doubled.clone(), 0).unwrap();
        let mut fresh = DataStream::new(p.with_w_o(doubled).unwrap(), 5);
        assert_eq!(at0.draw(), fresh.draw());
    }

    #[test]
    fn profile_validation() {
        let bad = vec![NodeProfile::isotropic(2, -1.0, 1.0, 0.1)];
        assert!(matches!(
            SystemProfile::new(vec![Complex64::new(1.0, 0.0); 2], bad, Field::Real),
            Err(Error::NonPositiveVariance { node: 0, .. })
        ));
        let wrong_dim = vec![NodeProfile::isotropic(3, 0.1, 1.0, 0.1)];
        assert!(SystemProfile::new(vec![Complex64::new(1.0, 0.0); 2], wrong_dim, Field::Real).is_err());
    }
}
