use approx::assert_abs_diff_eq;
use bcdiff_core::blockmat::{block_kron, bvec, kron, solve, spectral_radius, unbvec, BlockSpec, ComplexMatrix};
use bcdiff_core::Complex64;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), rows * cols).prop_map(move |v| {
        ComplexMatrix::from_vec(rows, cols, v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
    })
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bvec_product_identity(a in matrix(6, 6), s in matrix(6, 6), b in matrix(6, 6)) {
        let spec = BlockSpec::new(3, 2).unwrap();
        let lhs = bvec(&(&(&a * &s) * &b), spec).unwrap();
        let k = block_kron(&b.transpose(), &a, spec).unwrap();
        let rhs = k.mul_vec(&bvec(&s, spec).unwrap()).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn unbvec_inverts_bvec(x in matrix(6, 6)) {
        let spec = BlockSpec::new(2, 3).unwrap();
        let back = unbvec(&bvec(&x, spec).unwrap(), spec).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn kron_mixed_product(a in matrix(2, 2), b in matrix(3, 3), c in matrix(2, 2), d in matrix(3, 3)) {
        let lhs = &kron(&a, &b) * &kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!(max_diff(lhs.as_slice(), rhs.as_slice()) < 1e-12);
    }

    #[test]
    fn block_kron_spectrum_is_product(a in matrix(4, 4), b in matrix(4, 4)) {
        // blocks of size 1 reduce block_kron to kron
        let spec = BlockSpec::new(4, 1).unwrap();
        let k = block_kron(&a, &b, spec).unwrap();
        let rho = spectral_radius(&k).unwrap();
        let expected = spectral_radius(&a).unwrap() * spectral_radius(&b).unwrap();
        prop_assert!((rho - expected).abs() < 1e-8 * expected.max(1.0));
    }

    #[test]
    fn solve_residual(a in matrix(7, 7), x in matrix(7, 2)) {
        let mut a = a;
        let shifted = &a + &ComplexMatrix::identity(7).scale(Complex64::new(8.0, 0.0));
        a = shifted;
        let b = &a * &x;
        let sol = solve(&a, &b).unwrap();
        prop_assert!(max_diff(sol.as_slice(), x.as_slice()) < 1e-10);
    }
}

#[test]
fn bvec_identity_fixed_example() {
    let spec = BlockSpec::new(3, 2).unwrap();
    let a = ComplexMatrix::from_fn(6, 6, |i, j| Complex64::new((i * 7 + j) as f64 % 5.0 - 2.0, (i + 2 * j) as f64 % 3.0));
    let s = ComplexMatrix::from_fn(6, 6, |i, j| Complex64::new((i + j) as f64, i as f64 - j as f64));
    let b = a.adjoint();
    let lhs = bvec(&(&(&a * &s) * &b), spec).unwrap();
    let rhs = block_kron(&b.transpose(), &a, spec).unwrap().mul_vec(&bvec(&s, spec).unwrap()).unwrap();
    for (x, y) in lhs.iter().zip(&rhs) {
        assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-10);
        assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-10);
    }
}
