//! Adaptive estimators: the general three-step diffusion recursion (with ATC,
//! CTA and non-cooperative as special cases), standard diffusion LMS,
//! centralized LMS and the online regression-noise variance estimator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::datamodel::ObservationBatch;
use crate::error::{Error, Result};
use crate::network::{identity_combination, CombinationMatrix};

/// Below this `‖w‖²` the variance estimate is held at its previous value.
pub const VARIANCE_GUARD: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Where each node's regression-noise variance comes from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum VarianceSource {
    /// No compensation (standard LMS gradients).
    Uncompensated,
    /// True per-node variances supplied up front.
    Known(Vec<f64>),
    /// Online estimate with smoothing factor `alpha`. `initial` seeds
    /// `σ̂²(−1)` (zero when absent); `frozen` disables the update.
    Adaptive {
        alpha: f64,
        initial: Option<Vec<f64>>,
        frozen: bool,
    },
}

impl VarianceSource {
    pub fn adaptive(alpha: f64) -> Self {
        Self::Adaptive {
            alpha,
            initial: None,
            frozen: false,
        }
    }

    pub fn is_compensated(&self) -> bool {
        !matches!(self, Self::Uncompensated)
    }
}

/// Combination structure of an estimator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Strategy {
    /// `φ = Σ a1 w`, `ψ = φ + μ Σ c ∇`, `w = Σ a2 ψ`.
    Diffusion {
        a1: CombinationMatrix,
        a2: CombinationMatrix,
        c: CombinationMatrix,
    },
    /// One fusion center using every node's data.
    Centralized,
}

/// Estimator configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlgorithmConfig {
    pub strategy: Strategy,
    /// Per-node step sizes. Centralized runs use the first entry.
    pub step_sizes: Vec<f64>,
    pub variance: VarianceSource,
}

impl AlgorithmConfig {
    /// General form. `a1`, `a2` must be left-stochastic and `c` right-stochastic.
    pub fn general(
        a1: CombinationMatrix,
        a2: CombinationMatrix,
        c: CombinationMatrix,
        step_sizes: Vec<f64>,
        variance: VarianceSource,
    ) -> Result<Self> {
        let cfg = Self {
            strategy: Strategy::Diffusion { a1, a2, c },
            step_sizes,
            variance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Adapt-then-combine: `A1 = I`, `A2 = a`.
    pub fn atc(a: CombinationMatrix, c: CombinationMatrix, mu: f64, variance: VarianceSource) -> Result<Self> {
        let n = a.size();
        Self::general(identity_combination(n), a, c, vec![mu; n], variance)
    }

    /// Combine-then-adapt: `A1 = a`, `A2 = I`.
    pub fn cta(a: CombinationMatrix, c: CombinationMatrix, mu: f64, variance: VarianceSource) -> Result<Self> {
        let n = a.size();
        Self::general(a, identity_combination(n), c, vec![mu; n], variance)
    }

    /// Stand-alone LMS at every node: `A1 = A2 = C = I`.
    pub fn non_cooperative(n: usize, mu: f64, variance: VarianceSource) -> Result<Self> {
        let i = identity_combination(n);
        Self::general(i.clone(), i.clone(), i, vec![mu; n], variance)
    }

    /// Uncompensated ATC diffusion LMS.
    pub fn standard_atc(a: CombinationMatrix, c: CombinationMatrix, mu: f64) -> Result<Self> {
        Self::atc(a, c, mu, VarianceSource::Uncompensated)
    }

    /// Uncompensated CTA diffusion LMS.
    pub fn standard_cta(a: CombinationMatrix, c: CombinationMatrix, mu: f64) -> Result<Self> {
        Self::cta(a, c, mu, VarianceSource::Uncompensated)
    }

    pub fn centralized(n: usize, mu: f64, variance: VarianceSource) -> Result<Self> {
        let cfg = Self {
            strategy: Strategy::Centralized,
            step_sizes: vec![mu; n],
            variance,
        };
        cfg.validate()?;
        if matches!(cfg.variance, VarianceSource::Adaptive { .. }) {
            return Err(Error::InvalidParameter(
                "centralized mode supports known or no compensation only".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn num_nodes(&self) -> usize {
        self.step_sizes.len()
    }

    /// Same configuration without bias compensation.
    pub fn uncompensated(&self) -> Self {
        Self {
            variance: VarianceSource::Uncompensated,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.step_sizes.len();
        if n == 0 {
            return Err(Error::InvalidParameter("no step sizes given".into()));
        }
        if let Some(mu) = self.step_sizes.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be finite and >= 0, got {mu}")));
        }
        if let Strategy::Diffusion { a1, a2, c } = &self.strategy {
            for (name, mtx) in [("A1", a1), ("A2", a2), ("C", c)] {
                if mtx.size() != n {
                    return Err(Error::DimensionMismatch {
                        expected: (n, n),
                        found: (mtx.size(), mtx.size()),
                    });
                }
                let ok = if name == "C" { mtx.kind().is_right() } else { mtx.kind().is_left() };
                if !ok {
                    return Err(Error::InvalidParameter(format!(
                        "{name} has the wrong stochasticity ({:?})",
                        mtx.kind()
                    )));
                }
            }
        }
        match &self.variance {
            VarianceSource::Known(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: (n, 1),
                        found: (v.len(), 1),
                    });
                }
                if let Some((node, &value)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
                    return Err(Error::NonPositiveVariance { node, value });
                }
            }
            VarianceSource::Adaptive { alpha, initial, .. } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
                }
                if let Some(init) = initial {
                    if init.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: (n, 1),
                            found: (init.len(), 1),
                        });
                    }
                }
            }
            VarianceSource::Uncompensated => {}
        }
        Ok(())
    }
}

/// `z*(d − z w) + σ²_n w`, the negated conjugate instantaneous gradient.
pub fn stochastic_gradient(z: &[Complex64], d: Complex64, w: &[Complex64], sigma2_n: f64) -> Vec<Complex64> {
    let mut out = vec![ZERO; w.len()];
    accumulate_gradient(&mut out, 1.0, z, d, w, sigma2_n);
    out
}

/// `out += weight · (z*(d − z w) + σ²_n w)`. The compensation term is skipped
/// when `σ²_n = 0`, so that run is bit-for-bit the uncompensated one.
#[inline]
fn accumulate_gradient(out: &mut [Complex64], weight: f64, z: &[Complex64], d: Complex64, w: &[Complex64], sigma2_n: f64) {
    let zw: Complex64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
    let e = d - zw;
    for ((o, zj), wj) in out.iter_mut().zip(z).zip(w) {
        let mut g = zj.conj() * e;
        if sigma2_n != 0.0 {
            g += wj * sigma2_n;
        }
        *o += g * weight;
    }
}

/// One smoothing step of the online variance estimator. Returns the new
/// smoothed error power and the new estimate; the estimate stays at
/// `prev_estimate` while `‖w‖²` is below [`VARIANCE_GUARD`].
pub fn variance_update(f_prev: f64, e: Complex64, w_norm_sq: f64, alpha: f64, prev_estimate: f64) -> (f64, f64) {
    let f = alpha * f_prev + (1.0 - alpha) * e.norm_sqr();
    let est = if w_norm_sq >= VARIANCE_GUARD { f / w_norm_sq } else { prev_estimate };
    (f, est)
}

/// Centralized update `w += μ Σ_k (z_k*(d_k − z_k w) + σ²_k w)`.
pub fn centralized_step(w: &[Complex64], obs: &ObservationBatch, mu: f64, sigma2_n: &[f64]) -> Result<Vec<Complex64>> {
    check_obs(obs, sigma2_n.len(), w.len())?;
    let mut g = vec![ZERO; w.len()];
    for (k, &s) in sigma2_n.iter().enumerate() {
        accumulate_gradient(&mut g, 1.0, obs.z(k), obs.d(k), w, s);
    }
    Ok(w.iter().zip(&g).map(|(wj, gj)| wj + gj * mu).collect())
}

fn check_obs(obs: &ObservationBatch, n: usize, m: usize) -> Result<()> {
    if obs.num_nodes() != n || obs.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: (n, m),
            found: (obs.num_nodes(), obs.dim()),
        });
    }
    Ok(())
}

/// Nonzero entries of column `k`: `(l, weight)` pairs.
fn sparse_columns(mtx: &CombinationMatrix) -> Vec<Vec<(usize, f64)>> {
    let n = mtx.size();
    (0..n)
        .map(|k| (0..n).filter_map(|l| Some((l, mtx.get(l, k))).filter(|x| x.1 != 0.0)).collect())
        .collect()
}

/// Per-iteration state of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    n: usize,
    m: usize,
    w: Vec<Complex64>,
    phi: Vec<Complex64>,
    psi: Vec<Complex64>,
    f: Vec<f64>,
    sigma2_hat: Vec<f64>,
    iteration: u64,
}

impl NetworkState {
    /// All estimates at zero.
    pub fn zeros(n: usize, m: usize) -> Self {
        Self::from_weights(n, m, vec![ZERO; n * m]).expect("sizes agree")
    }

    /// Initial estimates stacked node by node.
    pub fn from_weights(n: usize, m: usize, w: Vec<Complex64>) -> Result<Self> {
        if w.len() != n * m {
            return Err(Error::DimensionMismatch {
                expected: (n * m, 1),
                found: (w.len(), 1),
            });
        }
        Ok(Self {
            n,
            m,
            phi: w.clone(),
            psi: w.clone(),
            w,
            f: vec![0.0; n],
            sigma2_hat: vec![0.0; n],
            iteration: 0,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn weights(&self, k: usize) -> &[Complex64] {
        &self.w[k * self.m..(k + 1) * self.m]
    }

    /// All estimates stacked node by node.
    pub fn all_weights(&self) -> &[Complex64] {
        &self.w
    }

    pub fn phi(&self, k: usize) -> &[Complex64] {
        &self.phi[k * self.m..(k + 1) * self.m]
    }

    pub fn psi(&self, k: usize) -> &[Complex64] {
        &self.psi[k * self.m..(k + 1) * self.m]
    }

    pub fn smoothed_error_power(&self) -> &[f64] {
        &self.f
    }

    pub fn variance_estimates(&self) -> &[f64] {
        &self.sigma2_hat
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest per-node estimate norm.
    pub fn max_weight_norm(&self) -> f64 {
        (0..self.n)
            .map(|k| libm::sqrt(self.weights(k).iter().map(|z| z.norm_sqr()).sum::<f64>()))
            .fold(0.0, f64::max)
    }
}

/// Runs an [`AlgorithmConfig`] on a stream of observation batches.
#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: AlgorithmConfig,
    a1: Option<Vec<Vec<(usize, f64)>>>,
    a2: Option<Vec<Vec<(usize, f64)>>>,
    c: Vec<Vec<(usize, f64)>>,
    state: NetworkState,
    scratch: Vec<Complex64>,
}

impl Estimator {
    /// Estimator with zero initial weights.
    pub fn new(cfg: AlgorithmConfig, m: usize) -> Result<Self> {
        let n = cfg.num_nodes();
        Self::with_state(cfg, NetworkState::zeros(n, m))
    }

    pub fn with_state(cfg: AlgorithmConfig, mut state: NetworkState) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.num_nodes();
        if state.n != n {
            return Err(Error::DimensionMismatch {
                expected: (n, state.m),
                found: (state.n, state.m),
            });
        }
        let sparse = |m: &CombinationMatrix| if m.is_identity() { None } else { Some(sparse_columns(m)) };
        let (a1, a2, c) = match &cfg.strategy {
            Strategy::Diffusion { a1, a2, c } => (sparse(a1), sparse(a2), sparse_columns(c)),
            Strategy::Centralized => (None, None, Vec::new()),
        };
        if let VarianceSource::Adaptive {
            initial: Some(init), ..
        } = &cfg.variance
        {
            state.sigma2_hat.clone_from(init);
        }
        let m = state.m;
        Ok(Self {
            cfg,
            a1,
            a2,
            c,
            scratch: vec![ZERO; m],
            state,
        })
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.cfg
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn into_state(self) -> NetworkState {
        self.state
    }

    /// Advances one synchronous iteration.
    pub fn step(&mut self, obs: &ObservationBatch) -> Result<()> {
        check_obs(obs, self.state.n, self.state.m)?;
        match self.cfg.strategy {
            Strategy::Centralized => self.step_centralized(obs),
            Strategy::Diffusion { .. } => self.step_diffusion(obs),
        }
        self.state.iteration += 1;
        Ok(())
    }

    fn step_centralized(&mut self, obs: &ObservationBatch) {
        let m = self.state.m;
        let mu = self.cfg.step_sizes[0];
        let w: Vec<Complex64> = self.state.w[..m].to_vec();
        let g = &mut self.scratch;
        g.iter_mut().for_each(|x| *x = ZERO);
        for k in 0..self.state.n {
            let s = match &self.cfg.variance {
                VarianceSource::Known(v) => v[k],
                _ => 0.0,
            };
            accumulate_gradient(g, 1.0, obs.z(k), obs.d(k), &w, s);
        }
        for k in 0..self.state.n {
            for j in 0..m {
                let next = w[j] + g[j] * mu;
                self.state.phi[k * m + j] = w[j];
                self.state.psi[k * m + j] = next;
                self.state.w[k * m + j] = next;
            }
        }
    }

    fn step_diffusion(&mut self, obs: &ObservationBatch) {
        let (n, m) = (self.state.n, self.state.m);
        let st = &mut self.state;

        match &self.a1 {
            None => st.phi.copy_from_slice(&st.w),
            Some(cols) => combine(&mut st.phi, &st.w, cols, m),
        }

        for k in 0..n {
            let phi_k = &st.phi[k * m..(k + 1) * m];
            let g = &mut self.scratch;
            g.iter_mut().for_each(|x| *x = ZERO);
            for &(l, c) in &self.c[k] {
                let s = match &self.cfg.variance {
                    VarianceSource::Uncompensated => 0.0,
                    VarianceSource::Known(v) => v[l],
                    VarianceSource::Adaptive { .. } => st.sigma2_hat[l],
                };
                accumulate_gradient(g, c, obs.z(l), obs.d(l), phi_k, s);
            }
            let mu = self.cfg.step_sizes[k];
            for j in 0..m {
                st.psi[k * m + j] = phi_k[j] + g[j] * mu;
            }
        }

        match &self.a2 {
            None => st.w.copy_from_slice(&st.psi),
            Some(cols) => combine(&mut st.w, &st.psi, cols, m),
        }

        if let VarianceSource::Adaptive { alpha, frozen: false, .. } = self.cfg.variance {
            for k in 0..n {
                let phi_k = &st.phi[k * m..(k + 1) * m];
                let zphi: Complex64 = obs.z(k).iter().zip(phi_k).map(|(a, b)| a * b).sum();
                let e = obs.d(k) - zphi;
                let wn: f64 = st.w[k * m..(k + 1) * m].iter().map(|z| z.norm_sqr()).sum();
                let (f, est) = variance_update(st.f[k], e, wn, alpha, st.sigma2_hat[k]);
                st.f[k] = f;
                st.sigma2_hat[k] = est;
            }
        }
    }
}

fn combine(out: &mut [Complex64], src: &[Complex64], cols: &[Vec<(usize, f64)>], m: usize) {
    for (k, col) in cols.iter().enumerate() {
        let o = &mut out[k * m..(k + 1) * m];
        o.iter_mut().for_each(|x| *x = ZERO);
        for &(l, a) in col {
            for (x, s) in o.iter_mut().zip(&src[l * m..(l + 1) * m]) {
                *x += s * a;
            }
        }
    }
}

/// Pure single-iteration form of [`Estimator::step`].
pub fn diffusion_step(state: &NetworkState, obs: &ObservationBatch, cfg: &AlgorithmConfig) -> Result<NetworkState> {
    let mut est = Estimator::with_state(cfg.clone(), state.clone())?;
    // with_state re-seeds σ̂² from the config; keep the running value instead
    est.state.sigma2_hat.clone_from(&state.sigma2_hat);
    est.step(obs)?;
    Ok(est.into_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{metropolis_weights, Topology};
    use approx::assert_abs_diff_eq;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn gradient_examples() {
        let z = [c(1.0), c(-2.0)];
        let w = [c(0.3), c(0.1)];
        let plain = stochastic_gradient(&z, c(0.7), &w, 0.0);
        let e = c(0.7) - (z[0] * w[0] + z[1] * w[1]);
        assert_eq!(plain, vec![z[0].conj() * e, z[1].conj() * e]);

        let g = stochastic_gradient(&[c(0.0), c(0.0)], c(0.4), &w, 0.5);
        assert_eq!(g, vec![c(0.15), c(0.05)]);

        let g = stochastic_gradient(&[c(1.0)], c(1.0), &[c(0.5)], 0.2);
        assert_abs_diff_eq!(g[0].re, 0.6, epsilon = 1e-15);
    }

    #[test]
    fn variance_update_examples() {
        let (f, s) = variance_update(0.0, c(1.0), 1.0, 0.99, 0.0);
        assert_abs_diff_eq!(f, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.01, epsilon = 1e-15);

        let (mut f, mut s) = (1.0, 1.0);
        for _ in 0..2000 {
            (f, s) = variance_update(f, c(0.0), 1.0, 0.99, s);
        }
        assert!(f < 1e-8 && s < 1e-8);

        assert_eq!(variance_update(0.0, c(1.0), 1e-12, 0.5, 0.3), (0.5, 0.3));
    }

    #[test]
    fn single_node_step_by_hand() {
        let cfg = AlgorithmConfig::non_cooperative(1, 0.1, VarianceSource::Known(vec![0.2])).unwrap();
        let mut est = Estimator::with_state(cfg, NetworkState::from_weights(1, 1, vec![c(0.5)]).unwrap()).unwrap();
        let obs = ObservationBatch::from_parts(1, vec![c(1.0)], vec![c(1.0)]).unwrap();
        est.step(&obs).unwrap();
        // 0.5 + 0.1 * 0.6
        assert_abs_diff_eq!(est.state().weights(0)[0].re, 0.56, epsilon = 1e-15);
    }

    #[test]
    fn zero_step_identity_combination_freezes() {
        let w: Vec<Complex64> = (0..6).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let state = NetworkState::from_weights(3, 2, w.clone()).unwrap();
        let cfg = AlgorithmConfig::non_cooperative(3, 0.0, VarianceSource::Known(vec![0.1; 3])).unwrap();
        let obs = ObservationBatch::from_parts(2, vec![c(1.0); 6], vec![c(2.0); 3]).unwrap();
        let next = diffusion_step(&state, &obs, &cfg).unwrap();
        assert_eq!(next.all_weights(), w.as_slice());
    }

    #[test]
    fn centralized_two_nodes_by_hand() {
        let obs = ObservationBatch::from_parts(1, vec![c(1.0), c(2.0)], vec![c(1.0), c(0.0)]).unwrap();
        // g = 1*(1 - 0.5) + 0.1*0.5 + 2*(0 - 1) + 0.3*0.5 = 0.5 + 0.05 - 2 + 0.15 = -1.3
        let w = centralized_step(&[c(0.5)], &obs, 0.1, &[0.1, 0.3]).unwrap();
        assert_abs_diff_eq!(w[0].re, 0.5 - 0.13, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        let t = Topology::complete(3).unwrap();
        let a = metropolis_weights(&t);
        assert!(AlgorithmConfig::atc(a.clone(), a.clone(), 0.1, VarianceSource::adaptive(1.0)).is_err());
        assert!(AlgorithmConfig::atc(a.clone(), a.clone(), -0.1, VarianceSource::Uncompensated).is_err());
        assert!(AlgorithmConfig::atc(a.clone(), a.clone(), 0.1, VarianceSource::Known(vec![0.1; 2])).is_err());
        assert!(AlgorithmConfig::centralized(3, 0.1, VarianceSource::adaptive(0.9)).is_err());
        let est = Estimator::new(AlgorithmConfig::standard_atc(a.clone(), a, 0.1).unwrap(), 2).unwrap();
        let obs = ObservationBatch::from_parts(2, vec![c(1.0); 4], vec![c(1.0); 2]).unwrap();
        assert!(est.clone().step(&obs).is_err());
    }
}
