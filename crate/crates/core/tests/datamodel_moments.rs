#[path = "support/oracle.rs"]
mod oracle;

use bcdiff_core::datamodel::{complex_profile, table1_profile, DataStream, Field, SystemProfile};
use bcdiff_core::Complex64;

/// Sample mean and standard error of a scalar statistic.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn assert_within(name: &str, xs: &[f64], expected: f64) {
    let (m, se) = mean_se(xs);
    assert!(
        (m - expected).abs() <= 4.0 * se + 1e-12,
        "{name}: sample mean {m} vs {expected} (se {se})"
    );
}

/// Checks `E[z* z] = R_u + σ²_n I`, `E[z* d] = R_u w°` and
/// `E|d|² = w°* R_u w° + σ²_v` entry by entry.
fn check_second_moments(profile: &SystemProfile, samples: usize, seed: u64) {
    let (n, m) = (profile.num_nodes(), profile.dim());
    let mut stream = DataStream::new(profile.clone(), seed);
    let draws: Vec<_> = (0..samples).map(|_| stream.draw()).collect();
    let w = profile.w_o();
    for k in 0..n {
        let node = profile.node(k);
        for a in 0..m {
            for b in 0..m {
                let rz = node.r_u[(a, b)] + if a == b { node.sigma2_n } else { 0.0 };
                let xs: Vec<Complex64> = draws.iter().map(|o| o.z(k)[a].conj() * o.z(k)[b]).collect();
                assert_within("Rz re", &xs.iter().map(|x| x.re).collect::<Vec<_>>(), rz.re);
                assert_within("Rz im", &xs.iter().map(|x| x.im).collect::<Vec<_>>(), rz.im);
            }
            let rdu: Complex64 = (0..m).map(|b| node.r_u[(a, b)] * w[b]).sum();
            let xs: Vec<Complex64> = draws.iter().map(|o| o.z(k)[a].conj() * o.d(k)).collect();
            assert_within("rdz re", &xs.iter().map(|x| x.re).collect::<Vec<_>>(), rdu.re);
            assert_within("rdz im", &xs.iter().map(|x| x.im).collect::<Vec<_>>(), rdu.im);
        }
        let mut quad = Complex64::new(0.0, 0.0);
        for a in 0..m {
            for b in 0..m {
                quad += w[a].conj() * node.r_u[(a, b)] * w[b];
            }
        }
        let xs: Vec<f64> = draws.iter().map(|o| o.d(k).norm_sqr()).collect();
        assert_within("E|d|^2", &xs, quad.re + node.sigma2_v);
    }
}

#[test]
fn table1_second_moments() {
    check_second_moments(&table1_profile(), 40_000, 11);
}

#[test]
fn complex_profile_second_moments() {
    let p = complex_profile();
    let sub = SystemProfile::new(p.w_o().to_vec(), p.nodes()[..4].to_vec(), p.field()).unwrap();
    check_second_moments(&sub, 40_000, 12);
}

#[test]
fn correlated_regressors_second_moments() {
    check_second_moments(&oracle::random_profile(3, 3, Field::Complex, 5), 40_000, 13);
    check_second_moments(&oracle::random_profile(3, 3, Field::Real, 6), 40_000, 14);
}

#[test]
fn complex_noise_is_circular() {
    let p = oracle::random_profile(2, 2, Field::Complex, 7);
    let mut stream = DataStream::new(p.clone(), 15);
    let draws: Vec<_> = (0..40_000).map(|_| stream.draw()).collect();
    for k in 0..2 {
        for a in 0..2 {
            // pseudo-covariance E[n n] vanishes for circular noise
            let xs: Vec<Complex64> = draws.iter().map(|o| o.latent(k).n[a] * o.latent(k).n[a]).collect();
            assert_within("E[n^2] re", &xs.iter().map(|x| x.re).collect::<Vec<_>>(), 0.0);
            assert_within("E[n^2] im", &xs.iter().map(|x| x.im).collect::<Vec<_>>(), 0.0);
            let xs: Vec<f64> = draws.iter().map(|o| o.latent(k).n[a].norm_sqr()).collect();
            assert_within("E|n|^2", &xs, p.node(k).sigma2_n);
        }
    }
}

#[test]
fn real_field_draws_are_real() {
    let p = table1_profile();
    let mut stream = DataStream::new(p, 3);
    for _ in 0..100 {
        let o = stream.draw();
        for k in 0..o.num_nodes() {
            assert!(o.z(k).iter().all(|x| x.im == 0.0));
            assert_eq!(o.d(k).im, 0.0);
        }
    }
}

#[test]
fn observation_model_holds_exactly() {
    let p = oracle::random_profile(3, 2, Field::Complex, 8);
    let mut stream = DataStream::new(p, 4);
    for _ in 0..50 {
        let o = stream.draw();
        for k in 0..3 {
            let l = o.latent(k);
            for a in 0..2 {
                assert_eq!(o.z(k)[a], l.u[a] + l.n[a]);
            }
            let uw: Complex64 = l.u.iter().zip(o.w_o()).map(|(u, w)| u * w).sum();
            assert!((o.d(k) - (uw + l.v)).norm() < 1e-12);
        }
    }
}
