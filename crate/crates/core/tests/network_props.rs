use bcdiff_core::network::{
    extend, identity_combination, metropolis_weights, random_geometric_topology, relative_variance_weights,
    Stochasticity, Topology, STOCHASTIC_TOL,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_topologies_are_connected_and_symmetric(n in 1usize..16, radius in 0.35f64..1.5, seed in any::<u64>()) {
        let t = random_geometric_topology(n, radius, seed).unwrap();
        prop_assert!(t.is_connected());
        for k in 0..n {
            prop_assert!(t.neighbors(k).contains(&k));
            for &l in t.neighbors(k) {
                prop_assert!(t.are_neighbors(l, k));
            }
        }
        let again = random_geometric_topology(n, radius, seed).unwrap();
        prop_assert_eq!(t, again);
    }

    #[test]
    fn metropolis_is_symmetric_doubly_stochastic(n in 1usize..16, radius in 0.35f64..1.5, seed in any::<u64>()) {
        let t = random_geometric_topology(n, radius, seed).unwrap();
        let c = metropolis_weights(&t);
        prop_assert_eq!(c.kind(), Stochasticity::Doubly);
        prop_assert!(c.validate().is_ok());
        prop_assert!(c.conforms_to(&t).is_ok());
        for k in 0..n {
            prop_assert!((c.row_sum(k) - 1.0).abs() <= STOCHASTIC_TOL);
            prop_assert!((c.col_sum(k) - 1.0).abs() <= STOCHASTIC_TOL);
            for l in 0..n {
                prop_assert_eq!(c.get(l, k), c.get(k, l));
                prop_assert!(c.get(l, k) >= 0.0);
            }
        }
    }

    #[test]
    fn relative_variance_is_left_stochastic(
        seed in any::<u64>(),
        vars in prop::collection::vec(0.01f64..2.0, 10),
    ) {
        let t = random_geometric_topology(10, 0.5, seed).unwrap();
        let a = relative_variance_weights(&t, &vars).unwrap();
        prop_assert!(a.kind().is_left());
        prop_assert!(a.conforms_to(&t).is_ok());
        for k in 0..10 {
            prop_assert!((a.col_sum(k) - 1.0).abs() <= STOCHASTIC_TOL);
            // noisier neighbours get smaller weights
            for &l in t.neighbors(k) {
                for &j in t.neighbors(k) {
                    if vars[l] < vars[j] {
                        prop_assert!(a.get(l, k) > a.get(j, k));
                    }
                }
            }
        }
    }
}

#[test]
fn extension_places_weights_on_block_diagonals() {
    let t = Topology::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let c = metropolis_weights(&t);
    let e = extend(&c, 2);
    for l in 0..3 {
        for k in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    let expected = if a == b { c.get(l, k) } else { 0.0 };
                    assert_eq!(e[(2 * l + a, 2 * k + b)].re, expected);
                }
            }
        }
    }
    assert!(identity_combination(3).is_identity());
}
