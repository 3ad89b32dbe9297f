//! Sample-average oracles for the noise moment matrices `G` and `Π`.
#![allow(dead_code)]

use bcdiff_core::blockmat::{solve, BlockSpec, ComplexMatrix};
use bcdiff_core::datamodel::{DataStream, Field, NodeProfile, SystemProfile};
use bcdiff_core::network::CombinationMatrix;
use bcdiff_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Profile with random Hermitian positive-definite `R_u,k`.
pub fn random_profile(n: usize, m: usize, field: Field, seed: u64) -> SystemProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let complex = field == Field::Complex;
    let entry = |rng: &mut ChaCha8Rng| {
        let im = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
        Complex64::new(rng.random_range(-1.0..1.0), im)
    };
    let w_o: Vec<Complex64> = (0..m).map(|_| entry(&mut rng)).collect();
    let nodes = (0..n)
        .map(|_| {
            let x = ComplexMatrix::from_fn(m, m, |_, _| entry(&mut rng));
            let xx = &x * &x.adjoint();
            let r = ComplexMatrix::from_fn(m, m, |a, b| xx[(a, b)] / m as f64 + if a == b { 0.5 } else { 0.0 });
            NodeProfile {
                sigma2_v: rng.random_range(0.05..0.5),
                r_u: r,
                sigma2_n: rng.random_range(0.05..0.5),
            }
        })
        .collect();
    SystemProfile::new(w_o, nodes, field).expect("random profile is valid")
}

/// Draws of a random vector `x` and the sample mean of `x x*`.
pub struct MomentEstimate {
    pub mean: ComplexMatrix,
    pub samples: usize,
    dim: usize,
    draws: Vec<Complex64>,
}

fn estimate(dim: usize, samples: usize, mut draw: impl FnMut(&mut [Complex64])) -> MomentEstimate {
    let mut draws = vec![Complex64::new(0.0, 0.0); dim * samples];
    for x in draws.chunks_mut(dim) {
        draw(x);
    }
    let mut sum = ComplexMatrix::zeros(dim, dim);
    for x in draws.chunks(dim) {
        for p in 0..dim {
            for q in 0..dim {
                sum.as_mut_slice()[p * dim + q] += x[p] * x[q].conj();
            }
        }
    }
    MomentEstimate {
        mean: sum.scale(Complex64::new(1.0 / samples as f64, 0.0)),
        samples,
        dim,
        draws,
    }
}

fn combine(c: &CombinationMatrix, s: &[Complex64], m: usize, out: &mut [Complex64]) {
    let n = c.size();
    for k in 0..n {
        for a in 0..m {
            out[k * m + a] = (0..n).map(|l| s[l * m + a] * c.get(l, k)).sum();
        }
    }
}

/// `E[g g*]` with `g_k = Σ_l c_lk z_l* v_l`.
pub fn sample_g(profile: &SystemProfile, c: &CombinationMatrix, samples: usize, seed: u64) -> MomentEstimate {
    let (n, m) = (profile.num_nodes(), profile.dim());
    let mut stream = DataStream::new(profile.clone(), seed);
    let mut s = vec![Complex64::new(0.0, 0.0); n * m];
    estimate(n * m, samples, |x| {
        let obs = stream.draw();
        for l in 0..n {
            let v = obs.latent(l).v;
            for (a, z) in obs.z(l).iter().enumerate() {
                s[l * m + a] = z.conj() * v;
            }
        }
        combine(c, &s, m, x);
    })
}

/// `E[p p*]` with `p_k = Σ_l c_lk (z_l* n_l − σ²_n,l I) w°`.
pub fn sample_pi(profile: &SystemProfile, c: &CombinationMatrix, samples: usize, seed: u64) -> MomentEstimate {
    let (n, m) = (profile.num_nodes(), profile.dim());
    let w = profile.w_o().to_vec();
    let mut stream = DataStream::new(profile.clone(), seed);
    let mut s = vec![Complex64::new(0.0, 0.0); n * m];
    estimate(n * m, samples, |x| {
        let obs = stream.draw();
        for l in 0..n {
            let nw: Complex64 = obs.latent(l).n.iter().zip(&w).map(|(a, b)| a * b).sum();
            let s2 = profile.node(l).sigma2_n;
            for (a, z) in obs.z(l).iter().enumerate() {
                s[l * m + a] = z.conj() * nw - w[a] * s2;
            }
        }
        combine(c, &s, m, x);
    })
}

/// Deviation of one block of the sample mean from the closed form.
#[derive(Debug, Clone, Copy)]
pub struct BlockCheck {
    pub k: usize,
    pub j: usize,
    /// Squared Mahalanobis distance `dᵀ S⁻¹ d` of the deviation `d` over the
    /// block's free real components, with `S` the covariance of the mean.
    pub stat: f64,
    pub dof: usize,
    /// Largest deviation among components with zero sample variance.
    pub exact_dev: f64,
}

impl BlockCheck {
    /// `stat` within three standard deviations of its expected value `dof`.
    pub fn passes(&self) -> bool {
        let d = self.dof as f64;
        self.stat <= d + 3.0 * (2.0 * d).sqrt() && self.exact_dev <= 1e-9
    }
}

/// Compares an estimate with a closed form block by block, using each
/// Hermitian entry once.
pub fn check_blocks(est: &MomentEstimate, theory: &ComplexMatrix, spec: BlockSpec) -> Vec<BlockCheck> {
    let (n, m) = (spec.num_blocks(), spec.block_size());
    let s = est.samples as f64;
    let mut out = Vec::new();
    for k in 0..n {
        for j in k..n {
            // (row, col, imaginary part?)
            let mut comps = Vec::new();
            for a in 0..m {
                for b in 0..m {
                    if k == j && b < a {
                        continue;
                    }
                    comps.push((k * m + a, j * m + b, false));
                    comps.push((k * m + a, j * m + b, true));
                }
            }
            let value = |x: &[Complex64], &(p, q, im): &(usize, usize, bool)| {
                let v = x[p] * x[q].conj();
                if im {
                    v.im
                } else {
                    v.re
                }
            };
            let target = |&(p, q, im): &(usize, usize, bool)| {
                let t = theory[(p, q)];
                if im {
                    t.im
                } else {
                    t.re
                }
            };
            let means: Vec<f64> = comps
                .iter()
                .map(|c| est.draws.chunks(est.dim).map(|x| value(x, c)).sum::<f64>() / s)
                .collect();
            let var = |i: usize| est.draws.chunks(est.dim).map(|x| (value(x, &comps[i]) - means[i]).powi(2)).sum::<f64>() / (s - 1.0);
            let scale = means.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
            let mut exact_dev: f64 = 0.0;
            let mut free = Vec::new();
            for i in 0..comps.len() {
                if var(i).sqrt() > 1e-12 * scale {
                    free.push(i);
                } else {
                    exact_dev = exact_dev.max((means[i] - target(&comps[i])).abs());
                }
            }
            let d = free.len();
            let cov = ComplexMatrix::from_fn(d, d, |r, c| {
                let (i, l) = (free[r], free[c]);
                let v = est
                    .draws
                    .chunks(est.dim)
                    .map(|x| (value(x, &comps[i]) - means[i]) * (value(x, &comps[l]) - means[l]))
                    .sum::<f64>()
                    / (s - 1.0)
                    / s;
                Complex64::new(v, 0.0)
            });
            let dev: Vec<Complex64> = free.iter().map(|&i| Complex64::new(means[i] - target(&comps[i]), 0.0)).collect();
            let stat = if d == 0 {
                0.0
            } else {
                let y = solve(&cov, &ComplexMatrix::column(dev.clone())).expect("component covariance is regular");
                dev.iter().zip(y.as_slice()).map(|(a, b)| (a * b).re).sum()
            };
            out.push(BlockCheck { k, j, stat, dof: d, exact_dev });
        }
    }
    out
}
