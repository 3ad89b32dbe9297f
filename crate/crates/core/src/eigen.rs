//! Eigenvalues of general complex matrices: Householder reduction to upper
//! Hessenberg form followed by single-shift QR with Givens rotations.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::blockmat::ComplexMatrix;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues(x: &ComplexMatrix) -> Result<Vec<Complex64>> {
    if !x.is_square() {
        return Err(Error::NotSquare {
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    let n = x.rows();
    if !x.all_finite() {
        return Err(Error::NoConvergence);
    }
    let mut h: Vec<Complex64> = x.as_slice().to_vec();
    hessenberg(&mut h, n);
    hessenberg_qr(&mut h, n)
}

fn hessenberg(h: &mut [Complex64], n: usize) {
    if n < 3 {
        return;
    }
    let mut v = Vec::with_capacity(n);
    for k in 0..n - 2 {
        v.clear();
        v.extend((k + 1..n).map(|i| h[i * n + k]));
        let norm = libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum::<f64>());
        if norm == 0.0 {
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        v[0] -= alpha;
        let vnorm = libm::sqrt(v.iter().map(|z| z.norm_sqr()).sum::<f64>());
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- (I - 2 v v^H) H
        for j in k..n {
            let s: Complex64 = v.iter().enumerate().map(|(t, vt)| vt.conj() * h[(k + 1 + t) * n + j]).sum();
            let s2 = s * 2.0;
            for (t, vt) in v.iter().enumerate() {
                h[(k + 1 + t) * n + j] -= vt * s2;
            }
        }
        // H <- H (I - 2 v v^H)
        for i in 0..n {
            let row = &mut h[i * n + k + 1..(i + 1) * n];
            let s: Complex64 = row.iter().zip(&v).map(|(a, vt)| a * vt).sum();
            let s2 = s * 2.0;
            for (a, vt) in row.iter_mut().zip(&v) {
                *a -= s2 * vt.conj();
            }
        }
        for i in k + 2..n {
            h[i * n + k] = ZERO;
        }
    }
}

fn eig2(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> (Complex64, Complex64) {
    let half_tr = (a + d) * 0.5;
    let diff = (a - d) * 0.5;
    let disc = (diff * diff + b * c).sqrt();
    (half_tr + disc, half_tr - disc)
}

fn hessenberg_qr(h: &mut [Complex64], n: usize) -> Result<Vec<Complex64>> {
    let mut eig = Vec::with_capacity(n);
    if n == 0 {
        return Ok(eig);
    }
    let at = |i: usize, j: usize| i * n + j;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let max_iter = 60 * n.max(1);
    let mut total = 0usize;
    let mut rot: Vec<(f64, Complex64)> = Vec::with_capacity(n);
    loop {
        if hi == 0 {
            eig.push(h[at(0, 0)]);
            break;
        }
        // find lo: start of the unreduced block ending at hi
        let mut lo = hi;
        while lo > 0 {
            let sub = h[at(lo, lo - 1)].norm();
            let diag = h[at(lo, lo)].norm() + h[at(lo - 1, lo - 1)].norm();
            if sub <= f64::EPSILON * diag || sub < f64::MIN_POSITIVE {
                h[at(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig.push(h[at(hi, hi)]);
            hi -= 1;
            iter = 0;
            continue;
        }
        if lo + 1 == hi {
            let (l1, l2) = eig2(h[at(lo, lo)], h[at(lo, hi)], h[at(hi, lo)], h[at(hi, hi)]);
            eig.push(l1);
            eig.push(l2);
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_iter {
            return Err(Error::NoConvergence);
        }
        let shift = if iter.is_multiple_of(10) {
            let ex = h[at(hi, hi - 1)].norm() + h[at(hi - 1, hi - 2)].norm();
            h[at(hi, hi)] + Complex64::new(ex, 0.0)
        } else {
            let d = h[at(hi, hi)];
            let (l1, l2) = eig2(h[at(hi - 1, hi - 1)], h[at(hi - 1, hi)], h[at(hi, hi - 1)], d);
            if (l1 - d).norm() <= (l2 - d).norm() {
                l1
            } else {
                l2
            }
        };
        for k in lo..=hi {
            h[at(k, k)] -= shift;
        }
        rot.clear();
        for k in lo..hi {
            let x = h[at(k, k)];
            let y = h[at(k + 1, k)];
            let xa = x.norm();
            let r = libm::hypot(xa, y.norm());
            let (c, s) = if r == 0.0 {
                (1.0, ZERO)
            } else if xa == 0.0 {
                (0.0, Complex64::new(1.0, 0.0))
            } else {
                (xa / r, (x / xa) * y.conj() / r)
            };
            rot.push((c, s));
            for j in k..=hi {
                let p = h[at(k, j)];
                let q = h[at(k + 1, j)];
                h[at(k, j)] = p * c + s * q;
                h[at(k + 1, j)] = -s.conj() * p + q * c;
            }
            h[at(k + 1, k)] = ZERO;
        }
        for (idx, &(c, s)) in rot.iter().enumerate() {
            let k = lo + idx;
            for i in lo..=(k + 1).min(hi) {
                let p = h[at(i, k)];
                let q = h[at(i, k + 1)];
                h[at(i, k)] = p * c + q * s.conj();
                h[at(i, k + 1)] = -p * s + q * c;
            }
        }
        for k in lo..=hi {
            h[at(k, k)] += shift;
        }
    }
    Ok(eig)
}
