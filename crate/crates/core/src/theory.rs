//! Mean and mean-square performance model of bias-compensated diffusion.
//!
//! Weight-error energies are written against block-vectorized weighting
//! matrices: `E‖w̃_i‖²_σ = E‖w̃_{i−1}‖²_{Fσ} + γᵀσ`. All `(NM)²` vectors use the
//! [`bvec`](crate::blockmat::bvec) layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::blockmat::{block_kron, bvec, solve, spectral_radius, BlockSpec, ComplexMatrix, Lu};
use crate::datamodel::{DataStream, SystemProfile};
use crate::error::{Error, Result};
use crate::network::{extend, CombinationMatrix};
use crate::rng::{derive_seed, StreamKind};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `1_N ⊗ w°`.
pub fn omega_o(w_o: &[Complex64], n: usize) -> Vec<Complex64> {
    (0..n).flat_map(|_| w_o.iter().copied()).collect()
}

/// Biased least-mean-squares solution `w_b = (R_u + σ²_n I)⁻¹ r_du` and its
/// bias `b = σ²_n (I + σ²_n R_u⁻¹)⁻¹ R_u⁻¹ w°` with `w° = R_u⁻¹ r_du`.
pub fn centralized_bias(r_u: &ComplexMatrix, r_du: &[Complex64], sigma2_n: f64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let m = r_u.rows();
    if !r_u.is_square() {
        return Err(Error::NotSquare {
            rows: r_u.rows(),
            cols: r_u.cols(),
        });
    }
    let rhs = ComplexMatrix::column(r_du.to_vec());
    let eye = ComplexMatrix::identity(m);
    let w_b = solve(&(r_u + &eye.scale(re(sigma2_n))), &rhs)?;
    let w_o = solve(r_u, &rhs)?;
    let r_inv = solve(r_u, &eye)?;
    let k = &eye + &r_inv.scale(re(sigma2_n));
    let b = solve(&k, &(&r_inv * &w_o))?.scale(re(sigma2_n));
    Ok((w_b.into_vec(), b.into_vec()))
}

/// Per-node step-size limits for mean stability.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepSizeBound {
    /// `2 / ρ(Σ_l c_lk R_u,l)`, bias-compensated recursion.
    pub compensated: f64,
    /// `2 / ρ(Σ_l c_lk (R_u,l + σ²_n,l I))`, uncompensated recursion.
    pub uncompensated: f64,
}

pub fn step_size_bounds(profile: &SystemProfile, c: &CombinationMatrix) -> Result<Vec<StepSizeBound>> {
    check_size(profile, c)?;
    let m = profile.dim();
    (0..profile.num_nodes())
        .map(|k| {
            let mut r = ComplexMatrix::zeros(m, m);
            let mut noise = 0.0;
            for l in 0..profile.num_nodes() {
                let w = c.get(l, k);
                if w != 0.0 {
                    r = &r + &profile.node(l).r_u.scale(re(w));
                    noise += w * profile.node(l).sigma2_n;
                }
            }
            let r_noisy = &r + &ComplexMatrix::identity(m).scale(re(noise));
            Ok(StepSizeBound {
                compensated: 2.0 / spectral_radius(&r)?,
                uncompensated: 2.0 / spectral_radius(&r_noisy)?,
            })
        })
        .collect()
}

fn check_size(profile: &SystemProfile, c: &CombinationMatrix) -> Result<()> {
    let n = profile.num_nodes();
    if c.size() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, n),
            found: (c.size(), c.size()),
        });
    }
    Ok(())
}

/// `blockdiag{Σ_l c_lk X_l}` over nodes.
fn fused_blockdiag(c: &CombinationMatrix, blocks: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let n = c.size();
    let m = blocks[0].rows();
    let fused: Vec<ComplexMatrix> = (0..n)
        .map(|k| {
            let mut acc = ComplexMatrix::zeros(m, m);
            for (l, x) in blocks.iter().enumerate() {
                let w = c.get(l, k);
                if w != 0.0 {
                    acc = &acc + &x.scale(re(w));
                }
            }
            acc
        })
        .collect();
    ComplexMatrix::block_diag(&fused)
}

fn step_matrix(mu: &[f64], m: usize) -> ComplexMatrix {
    let diag: Vec<f64> = mu.iter().flat_map(|&x| core::iter::repeat_n(x, m)).collect();
    ComplexMatrix::diag_real(&diag)
}

fn mean_transition(a1e: &ComplexMatrix, a2e: &ComplexMatrix, step: &ComplexMatrix, r: &ComplexMatrix) -> ComplexMatrix {
    let eye = ComplexMatrix::identity(r.rows());
    let inner = &eye - &(step * r);
    &(&a2e.transpose() * &inner) * &a1e.transpose()
}

/// Operator of the form `(A1 ⊗_b A1) · D · (A2 ⊗_b A2)` where `D` is block
/// diagonal over node pairs `(k, l)` with `M² x M²` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOperator {
    n: usize,
    m: usize,
    left: Option<Vec<Vec<(usize, f64)>>>,
    mid: Vec<ComplexMatrix>,
    right: Option<Vec<Vec<(usize, f64)>>>,
}

/// Sparse rows of `A ⊗ A` over node pairs; `None` for the identity.
fn pair_rows(a: &CombinationMatrix) -> Option<Vec<Vec<(usize, f64)>>> {
    if a.is_identity() {
        return None;
    }
    let n = a.size();
    let rows = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .map(|(i, k)| {
            let mut row = Vec::new();
            for j in 0..n {
                let aij = a.get(i, j);
                if aij == 0.0 {
                    continue;
                }
                for l in 0..n {
                    let akl = a.get(k, l);
                    if akl != 0.0 {
                        row.push((j * n + l, aij * akl));
                    }
                }
            }
            row
        })
        .collect();
    Some(rows)
}

fn transpose_rows(rows: &[Vec<(usize, f64)>]) -> Vec<Vec<(usize, f64)>> {
    let mut out = vec![Vec::new(); rows.len()];
    for (p, row) in rows.iter().enumerate() {
        for &(s, v) in row {
            out[s].push((p, v));
        }
    }
    out
}

impl PairOperator {
    fn new(a1: &CombinationMatrix, a2: &CombinationMatrix, m: usize, mid: Vec<ComplexMatrix>) -> Self {
        Self {
            n: a1.size(),
            m,
            left: pair_rows(a1),
            mid,
            right: pair_rows(a2),
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.n * self.m * self.m
    }

    /// Middle block for node pair `(k, l)`.
    pub fn middle_block(&self, k: usize, l: usize) -> &ComplexMatrix {
        &self.mid[k * self.n + l]
    }

    fn apply_sparse(rows: &Option<Vec<Vec<(usize, f64)>>>, v: Vec<Complex64>, bs: usize) -> Vec<Complex64> {
        match rows {
            None => v,
            Some(rows) => {
                let mut out = vec![ZERO; v.len()];
                for (p, row) in rows.iter().enumerate() {
                    let o = &mut out[p * bs..(p + 1) * bs];
                    for &(s, w) in row {
                        for (x, y) in o.iter_mut().zip(&v[s * bs..(s + 1) * bs]) {
                            *x += y * w;
                        }
                    }
                }
                out
            }
        }
    }

    fn apply_mid(&self, v: &[Complex64], transpose: bool) -> Vec<Complex64> {
        let bs = self.m * self.m;
        let mut out = vec![ZERO; v.len()];
        for (s, blk) in self.mid.iter().enumerate() {
            let x = &v[s * bs..(s + 1) * bs];
            let y = if transpose {
                blk.transpose_mul_vec(x)
            } else {
                blk.mul_vec(x)
            }
            .expect("block sizes agree");
            out[s * bs..(s + 1) * bs].copy_from_slice(&y);
        }
        out
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let bs = self.m * self.m;
        let x = Self::apply_sparse(&self.right, v.to_vec(), bs);
        let x = self.apply_mid(&x, false);
        Self::apply_sparse(&self.left, x, bs)
    }

    pub fn apply_transpose(&self, v: &[Complex64]) -> Vec<Complex64> {
        let bs = self.m * self.m;
        let lt = self.left.as_deref().map(transpose_rows);
        let rt = self.right.as_deref().map(transpose_rows);
        let x = Self::apply_sparse(&lt, v.to_vec(), bs);
        let x = self.apply_mid(&x, true);
        Self::apply_sparse(&rt, x, bs)
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let bs = self.m * self.m;
        let np = self.n * self.n;
        let dim = np * bs;
        // T = D · (A2 ⊗_b A2), stored as sparse block rows
        let right: Vec<Vec<(usize, f64)>> = match &self.right {
            Some(r) => r.clone(),
            None => (0..np).map(|p| vec![(p, 1.0)]).collect(),
        };
        let left: Vec<Vec<(usize, f64)>> = match &self.left {
            Some(r) => r.clone(),
            None => (0..np).map(|p| vec![(p, 1.0)]).collect(),
        };
        let mut out = ComplexMatrix::zeros(dim, dim);
        for (p, lrow) in left.iter().enumerate() {
            for &(s, lw) in lrow {
                let blk = &self.mid[s];
                for &(q, rw) in &right[s] {
                    let w = lw * rw;
                    for a in 0..bs {
                        for b in 0..bs {
                            out[(p * bs + a, q * bs + b)] += blk[(a, b)] * w;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Weighted-variance transition `F`.
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceTransition {
    /// `F = Bᵀ ⊗_b B*` for the stored mean transition `B`.
    Kronecker(ComplexMatrix),
    /// Factored `(A1 ⊗_b A1) D (A2 ⊗_b A2)` form.
    Pair(PairOperator),
    Dense(ComplexMatrix),
}

impl VarianceTransition {
    /// `Fᵀ g`.
    pub fn apply_transpose(&self, g: &[Complex64], spec: BlockSpec) -> Result<Vec<Complex64>> {
        match self {
            Self::Kronecker(b) => {
                // Fᵀ bvec(X) = bvec(conj(B) X Bᵀ)
                let x = crate::blockmat::unbvec(g, spec)?;
                bvec(&(&(&b.conj() * &x) * &b.transpose()), spec)
            }
            Self::Pair(p) => Ok(p.apply_transpose(g)),
            Self::Dense(f) => f.transpose_mul_vec(g),
        }
    }

    pub fn to_dense(&self, spec: BlockSpec) -> Result<ComplexMatrix> {
        match self {
            Self::Kronecker(b) => block_kron(&b.transpose(), &b.adjoint(), spec),
            Self::Pair(p) => Ok(p.to_dense()),
            Self::Dense(f) => Ok(f.clone()),
        }
    }

    /// `ρ(F)`. Exact and cheap for the Kronecker form; otherwise computed from
    /// the dense matrix.
    pub fn spectral_radius(&self, spec: BlockSpec) -> Result<f64> {
        match self {
            Self::Kronecker(b) => {
                let r = spectral_radius(b)?;
                Ok(r * r)
            }
            _ => spectral_radius(&self.to_dense(spec)?),
        }
    }
}

/// Matrices of the mean and mean-square recursions.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOperators {
    pub spec: BlockSpec,
    /// `diag{μ_k I_M}`.
    pub step: ComplexMatrix,
    /// `blockdiag{Σ_l c_lk R_u,l}`.
    pub r: ComplexMatrix,
    /// Mean transition `A2ᵀ(I − M R)A1ᵀ`.
    pub b: ComplexMatrix,
    /// Output-noise moment `E[g g*]`.
    pub g: ComplexMatrix,
    /// Regression-noise moment.
    pub pi: ComplexMatrix,
    pub transition: VarianceTransition,
    pub gamma: Vec<Complex64>,
    a2e: ComplexMatrix,
    r_u: Vec<ComplexMatrix>,
    w_o: Vec<Complex64>,
}

/// Bias-compensated operators with `F = Bᵀ ⊗_b B*`.
pub fn build_operators(
    profile: &SystemProfile,
    a1: &CombinationMatrix,
    a2: &CombinationMatrix,
    c: &CombinationMatrix,
    mu: &[f64],
) -> Result<TheoryOperators> {
    let n = profile.num_nodes();
    let m = profile.dim();
    for x in [a1, a2, c] {
        check_size(profile, x)?;
    }
    if mu.len() != n {
        return Err(Error::DimensionMismatch {
            expected: (n, 1),
            found: (mu.len(), 1),
        });
    }
    let spec = BlockSpec::new(n, m)?;
    let a1e = extend(a1, m);
    let a2e = extend(a2, m);
    let ce = extend(c, m);
    let step = step_matrix(mu, m);
    let r_u: Vec<ComplexMatrix> = profile.nodes().iter().map(|x| x.r_u.clone()).collect();
    let r = fused_blockdiag(c, &r_u)?;
    let b = mean_transition(&a1e, &a2e, &step, &r);

    let eye = ComplexMatrix::identity(m);
    let rz: Vec<ComplexMatrix> = profile
        .nodes()
        .iter()
        .map(|x| &x.r_u + &eye.scale(re(x.sigma2_n)))
        .collect();
    let out_noise: Vec<ComplexMatrix> = profile
        .nodes()
        .iter()
        .zip(&rz)
        .map(|(x, rz)| rz.scale(re(x.sigma2_v)))
        .collect();
    let g = &(&ce.transpose() * &ComplexMatrix::block_diag(&out_noise)?) * &ce;

    let pi = regression_noise_moment(profile, c)?;

    let w_gt = &(&a2e.transpose() * &step) * &g.transpose();
    let p_gt = &(&a2e.transpose() * &step) * &pi.transpose();
    let ms = &step * &a2e;
    let gamma_mat = &(&w_gt * &ms) + &(&p_gt * &ms);
    let gamma = bvec(&gamma_mat, spec)?;

    Ok(TheoryOperators {
        spec,
        step,
        r,
        transition: VarianceTransition::Kronecker(b.clone()),
        b,
        g,
        pi,
        gamma,
        a2e,
        r_u,
        w_o: profile.w_o().to_vec(),
    })
}

/// `Π` with blocks `Σ_l c_lk c_lj {σ²_n,l ‖w°‖² (R_u,l + σ²_n,l I) + (β−1) σ⁴_n,l w° w°*}`.
fn regression_noise_moment(profile: &SystemProfile, c: &CombinationMatrix) -> Result<ComplexMatrix> {
    let n = profile.num_nodes();
    let m = profile.dim();
    let spec = BlockSpec::new(n, m)?;
    let w = profile.w_o();
    let w2 = profile.w_o_norm_sq();
    let beta = profile.beta();
    let eye = ComplexMatrix::identity(m);
    let outer = ComplexMatrix::from_fn(m, m, |a, b| w[a] * w[b].conj());
    let per_node: Vec<ComplexMatrix> = profile
        .nodes()
        .iter()
        .map(|x| {
            let s = x.sigma2_n;
            let base = (&x.r_u + &eye.scale(re(s))).scale(re(s * w2));
            &base + &outer.scale(re((beta - 1.0) * s * s))
        })
        .collect();
    let mut pi = ComplexMatrix::zeros(n * m, n * m);
    for k in 0..n {
        for j in 0..n {
            let mut blk = ComplexMatrix::zeros(m, m);
            for (l, x) in per_node.iter().enumerate() {
                let w = c.get(l, k) * c.get(l, j);
                if w != 0.0 {
                    blk = &blk + &x.scale(re(w));
                }
            }
            pi.set_block(spec, k, j, &blk);
        }
    }
    Ok(pi)
}

impl TheoryOperators {
    /// Replaces `F` (e.g. with [`f_small_step`] or [`empirical_f`]).
    pub fn with_transition(mut self, transition: VarianceTransition) -> Self {
        self.transition = transition;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.spec.num_blocks()
    }

    pub fn dim(&self) -> usize {
        self.spec.block_size()
    }

    /// `ρ(B)`.
    pub fn mean_spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.b)
    }

    /// `E[w̃_i]` for `i = 0..steps` starting from zero estimates
    /// (`w̃_{−1} = ω°`); entry 0 is `B ω°`.
    pub fn mean_error(&self, steps: usize) -> Vec<Vec<Complex64>> {
        let mut x = omega_o(&self.w_o, self.num_nodes());
        (0..steps)
            .map(|_| {
                x = self.b.mul_vec(&x).expect("sizes agree");
                x.clone()
            })
            .collect()
    }

    /// `bvec(diag(e_k) ⊗ I_M)`.
    pub fn sigma_msd(&self, k: usize) -> Vec<Complex64> {
        self.node_weighting(k, &ComplexMatrix::identity(self.dim()))
    }

    /// `bvec(diag(e_k) ⊗ R_u,k)`.
    pub fn sigma_emse(&self, k: usize) -> Vec<Complex64> {
        self.node_weighting(k, &self.r_u[k])
    }

    fn node_weighting(&self, k: usize, blk: &ComplexMatrix) -> Vec<Complex64> {
        let d = self.spec.dim();
        let mut x = ComplexMatrix::zeros(d, d);
        x.set_block(self.spec, k, k, blk);
        bvec(&x, self.spec).expect("conforming")
    }

    /// `bvec(conj(ω°) ω°ᵀ)`, so that `gᵀσ = ‖ω°‖²_σ`.
    fn omega_weight(&self) -> Vec<Complex64> {
        let w = omega_o(&self.w_o, self.num_nodes());
        let d = w.len();
        let x = ComplexMatrix::from_fn(d, d, |p, q| w[p].conj() * w[q]);
        bvec(&x, self.spec).expect("conforming")
    }

    /// Per-node MSD and EMSE read off a left vector `y` (`η = yᵀσ`).
    fn read_out(&self, y: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.num_nodes(), self.dim());
        let mut msd = Vec::with_capacity(n);
        let mut emse = Vec::with_capacity(n);
        for k in 0..n {
            let mut a = ZERO;
            let mut b = ZERO;
            for c in 0..m {
                for r in 0..m {
                    let v = y[((k * n + k) * m + c) * m + r];
                    if r == c {
                        a += v;
                    }
                    b += v * self.r_u[k][(r, c)];
                }
            }
            msd.push(a.re);
            emse.push(b.re);
        }
        (msd, emse)
    }

    /// Limiting per-node and network MSD/EMSE, from `(I − F)ᵀ y = γ`.
    pub fn steady_state(&self) -> Result<PerformancePrediction> {
        if let VarianceTransition::Kronecker(_) = &self.transition {
            let rho = self.transition.spectral_radius(self.spec)?;
            if rho >= 1.0 {
                return Err(Error::Unstable { spectral_radius: rho });
            }
        }
        let f = self.transition.to_dense(self.spec)?;
        let d = f.rows();
        let mut a = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                a[(i, j)] = if i == j { ONE } else { ZERO } - f[(j, i)];
            }
        }
        drop(f);
        let lu = Lu::new(&a).map_err(|e| match e {
            Error::Singular => Error::Unstable { spectral_radius: 1.0 },
            e => e,
        })?;
        let y = lu.solve_vec(&self.gamma)?;
        let (msd, emse) = self.read_out(&y);
        Ok(PerformancePrediction::new(msd, emse))
    }

    /// Learning curves from zero initialization. Index `t = 0` is the initial
    /// state; `t` runs to `horizon` inclusive.
    pub fn transient(&self, horizon: usize) -> Result<TransientPrediction> {
        let mut b = self.omega_weight();
        let mut a = self.gamma.clone();
        let mut acc = vec![ZERO; a.len()];
        let n = self.num_nodes();
        let mut msd = Vec::with_capacity(horizon + 1);
        let mut emse = Vec::with_capacity(horizon + 1);
        for t in 0..=horizon {
            // η(t) = ‖ω°‖²_{Fᵗσ} + γᵀ Σ_{j<t} Fʲσ
            let y: Vec<Complex64> = b.iter().zip(&acc).map(|(x, s)| x + s).collect();
            let (m_t, e_t) = self.read_out(&y);
            if m_t.iter().chain(&e_t).any(|x| !x.is_finite() || x.abs() > 1e30) {
                return Err(Error::Unstable {
                    spectral_radius: self.transition.spectral_radius(self.spec).unwrap_or(f64::INFINITY),
                });
            }
            msd.push(m_t);
            emse.push(e_t);
            if t == horizon {
                break;
            }
            for (s, x) in acc.iter_mut().zip(&a) {
                *s += x;
            }
            a = self.transition.apply_transpose(&a, self.spec)?;
            b = self.transition.apply_transpose(&b, self.spec)?;
        }
        let network_msd = msd.iter().map(|v| v.iter().sum::<f64>() / n as f64).collect();
        let network_emse = emse.iter().map(|v| v.iter().sum::<f64>() / n as f64).collect();
        Ok(TransientPrediction {
            msd,
            emse,
            network_msd,
            network_emse,
        })
    }
}

/// Steady-state MSD and EMSE.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerformancePrediction {
    pub msd: Vec<f64>,
    pub emse: Vec<f64>,
    pub network_msd: f64,
    pub network_emse: f64,
}

impl PerformancePrediction {
    pub fn new(msd: Vec<f64>, emse: Vec<f64>) -> Self {
        let n = msd.len() as f64;
        Self {
            network_msd: msd.iter().sum::<f64>() / n,
            network_emse: emse.iter().sum::<f64>() / n,
            msd,
            emse,
        }
    }
}

/// Learning curves indexed `[iteration][node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientPrediction {
    pub msd: Vec<Vec<f64>>,
    pub emse: Vec<Vec<f64>>,
    pub network_msd: Vec<f64>,
    pub network_emse: Vec<f64>,
}

/// `10 log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// Small-step expansion
/// `(A1 ⊗_b A1)(I − I ⊗_b R M − Rᵀ M ⊗_b I)(A2 ⊗_b A2)`.
pub fn f_small_step(ops: &TheoryOperators, a1: &CombinationMatrix, a2: &CombinationMatrix) -> PairOperator {
    let (n, m) = (ops.num_nodes(), ops.dim());
    let eye = ComplexMatrix::identity(m);
    let rm: Vec<ComplexMatrix> = (0..n)
        .map(|k| &ops.r.block(ops.spec, k, k) * &ops.step.block(ops.spec, k, k))
        .collect();
    let mut mid = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            let id = crate::blockmat::kron(&eye, &eye);
            let t1 = crate::blockmat::kron(&eye, &rm[l]);
            let t2 = crate::blockmat::kron(&rm[k].transpose(), &eye);
            mid.push(&(&id - &t1) - &t2);
        }
    }
    PairOperator::new(a1, a2, m, mid)
}

/// Sample average of `B_iᵀ ⊗_b B_i*` with `B_i = A2ᵀ(I − M R_i)A1ᵀ` and
/// `R_i = blockdiag{Σ_l c_lk (z_l* z_l − σ²_n,l I)}` drawn from the profile.
pub fn empirical_f(
    profile: &SystemProfile,
    a1: &CombinationMatrix,
    a2: &CombinationMatrix,
    c: &CombinationMatrix,
    mu: &[f64],
    num_samples: usize,
    seed: u64,
) -> Result<PairOperator> {
    let n = profile.num_nodes();
    let m = profile.dim();
    for x in [a1, a2, c] {
        check_size(profile, x)?;
    }
    if mu.len() != n || num_samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need {n} step sizes and at least one sample"
        )));
    }
    let mut stream = DataStream::new(profile.clone(), derive_seed(&[seed, StreamKind::Operator as u64]));
    let eye = ComplexMatrix::identity(m);
    let mut mid = vec![ComplexMatrix::zeros(m * m, m * m); n * n];
    let mut d = vec![ComplexMatrix::zeros(m, m); n];
    for _ in 0..num_samples {
        let obs = stream.draw();
        let outer: Vec<ComplexMatrix> = (0..n)
            .map(|l| {
                let z = obs.z(l);
                ComplexMatrix::from_fn(m, m, |a, b| z[a].conj() * z[b])
            })
            .collect();
        for k in 0..n {
            let mut rk = ComplexMatrix::zeros(m, m);
            for (l, x) in outer.iter().enumerate() {
                let w = c.get(l, k);
                if w != 0.0 {
                    let compensated = x - &eye.scale(re(profile.node(l).sigma2_n));
                    rk = &rk + &compensated.scale(re(w));
                }
            }
            // diagonal block of I − M R_i
            d[k] = &eye - &rk.scale(re(mu[k]));
        }
        // (I − M R_i)ᵀ ⊗_b (I − M R_i)* has pair blocks D_kᵀ ⊗ D_l*
        for k in 0..n {
            let dkt = d[k].transpose();
            for l in 0..n {
                let blk = crate::blockmat::kron(&dkt, &d[l].adjoint());
                let acc = &mut mid[k * n + l];
                *acc = &*acc + &blk;
            }
        }
    }
    let scale = re(1.0 / num_samples as f64);
    for x in mid.iter_mut() {
        *x = x.scale(scale);
    }
    Ok(PairOperator::new(a1, a2, m, mid))
}

/// Limiting mean weight error of uncompensated diffusion,
/// `(I − B′)⁻¹ A2ᵀ M P′ ω°`.
pub fn standard_diffusion_bias(
    profile: &SystemProfile,
    a1: &CombinationMatrix,
    a2: &CombinationMatrix,
    c: &CombinationMatrix,
    mu: &[f64],
) -> Result<Vec<Complex64>> {
    let n = profile.num_nodes();
    let m = profile.dim();
    let a1e = extend(a1, m);
    let a2e = extend(a2, m);
    let step = step_matrix(mu, m);
    let eye = ComplexMatrix::identity(m);
    let rz: Vec<ComplexMatrix> = profile
        .nodes()
        .iter()
        .map(|x| &x.r_u + &eye.scale(re(x.sigma2_n)))
        .collect();
    let noise: Vec<ComplexMatrix> = profile.nodes().iter().map(|x| eye.scale(re(x.sigma2_n))).collect();
    let r_prime = fused_blockdiag(c, &rz)?;
    let p_prime = fused_blockdiag(c, &noise)?;
    let b_prime = mean_transition(&a1e, &a2e, &step, &r_prime);
    let rho = spectral_radius(&b_prime)?;
    if rho >= 1.0 {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let omega = ComplexMatrix::column(omega_o(profile.w_o(), n));
    let rhs = &(&(&a2e.transpose() * &step) * &p_prime) * &omega;
    let lhs = &ComplexMatrix::identity(n * m) - &b_prime;
    Ok(solve(&lhs, &rhs)?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{Field, NodeProfile};
    use crate::network::{identity_combination, metropolis_weights, Topology};
    use approx::assert_abs_diff_eq;

    fn scalar_profile(r: f64, s: f64, v: f64) -> SystemProfile {
        SystemProfile::new(vec![re(1.0)], vec![NodeProfile::isotropic(1, v, r, s)], Field::Real).unwrap()
    }

    #[test]
    fn centralized_bias_scalar() {
        let r = ComplexMatrix::from_real(1, 1, &[1.0]).unwrap();
        let (wb, b) = centralized_bias(&r, &[re(1.0)], 1.0).unwrap();
        assert_abs_diff_eq!(wb[0].re, 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b[0].re, 0.5, epsilon = 1e-14);
        let (wb, b) = centralized_bias(&r, &[re(1.0)], 0.0).unwrap();
        assert_abs_diff_eq!(wb[0].re, 1.0, epsilon = 1e-14);
        assert_eq!(b[0].re, 0.0);
    }

    #[test]
    fn bounds_scalar() {
        let p = scalar_profile(1.0, 0.5, 0.1);
        let b = step_size_bounds(&p, &identity_combination(1)).unwrap();
        assert_abs_diff_eq!(b[0].compensated, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[0].uncompensated, 2.0 / 1.5, epsilon = 1e-12);
    }

    #[test]
    fn standard_bias_scalar() {
        let p = scalar_profile(1.0, 1.0, 0.1);
        let i = identity_combination(1);
        let bias = standard_diffusion_bias(&p, &i, &i, &i, &[0.1]).unwrap();
        assert_abs_diff_eq!(bias[0].re, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn kronecker_transpose_action_matches_dense() {
        let t = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let a = metropolis_weights(&t);
        let nodes = vec![
            NodeProfile::isotropic(2, 0.01, 1.0, 0.1),
            NodeProfile::isotropic(2, 0.02, 0.5, 0.05),
            NodeProfile::isotropic(2, 0.03, 2.0, 0.2),
        ];
        let p = SystemProfile::new(vec![re(0.3), re(-0.7)], nodes, Field::Real).unwrap();
        let ops = build_operators(&p, &identity_combination(3), &a, &a, &[0.1, 0.2, 0.05]).unwrap();
        let f = ops.transition.to_dense(ops.spec).unwrap();
        let g: Vec<Complex64> = (0..36).map(|i| Complex64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let lhs = ops.transition.apply_transpose(&g, ops.spec).unwrap();
        let rhs = f.transpose_mul_vec(&g).unwrap();
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() < 1e-12);
        }
        let small = f_small_step(&ops, &identity_combination(3), &a);
        let lhs = small.apply_transpose(&g);
        let rhs = small.to_dense().transpose_mul_vec(&g).unwrap();
        for (x, y) in lhs.iter().zip(&rhs) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
