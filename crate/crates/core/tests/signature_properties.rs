mod common;

use feeder_topo::detection::{project, trend_vector};
use feeder_topo::grid::approx_voltage;
use feeder_topo::signature::{particular_library, rank_one_ratio, Candidate, SignatureSet};
use feeder_topo::{Execution, Placement};
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transition_differences_are_rank_one(spec in common::grid_spec(10, 3)) {
        let g = spec.build().expect("generated grids are valid");
        let set = SignatureSet::compute(&g, Execution::Sequential).unwrap();
        for key in set.keys() {
            prop_assert!(rank_one_ratio(&g, key).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn linearized_trends_saturate_their_own_signature(spec in common::grid_spec(10, 3)) {
        let g = spec.build().expect("generated grids are valid");
        let set = SignatureSet::compute(&g, Execution::Sequential).unwrap();
        let p = Placement::full(&g);
        let lib = set.restrict(&p).unwrap();
        let s = g.nominal_injection();
        for e in lib.entries() {
            prop_assert!((feeder_topo::linalg::norm(&e.vector) - 1.0).abs() <= 1e-12);
            let open = approx_voltage(&g.pseudo_inverse(&e.key.open_status()).unwrap(), &s, 1.0);
            let closed = approx_voltage(&g.pseudo_inverse(&e.key.closed_status()).unwrap(), &s, 1.0);
            let close = trend_vector(p.select(closed.as_slice()).as_slice(), p.select(open.as_slice()).as_slice()).unwrap();
            let open_d = trend_vector(p.select(open.as_slice()).as_slice(), p.select(closed.as_slice()).as_slice()).unwrap();
            let cand = [Candidate { breaker: e.key.breaker(), signature: &e.vector, after: e.key.closed_status() }];
            let a = project(&close, &cand).unwrap().unwrap();
            let b = project(&open_d, &cand).unwrap().unwrap();
            prop_assert!(a.best_score >= 0.999, "{}", a.best_score);
            prop_assert!((a.best_score - b.best_score).abs() <= 1e-12);
        }
    }

    #[test]
    fn projections_ignore_signature_phase(
        spec in common::grid_spec(10, 3),
        phases in proptest::collection::vec(0.0..std::f64::consts::TAU, 8),
        coeffs in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 10),
    ) {
        let g = spec.build().expect("generated grids are valid");
        let lib = SignatureSet::compute(&g, Execution::Sequential).unwrap().restrict(&Placement::full(&g)).unwrap();
        let sigma = g.admissible_statuses()[0];
        let cands = particular_library(&lib, &sigma);
        prop_assume!(!cands.is_empty());
        let delta: Vec<Complex64> = (0..g.num_buses())
            .map(|i| { let (a, b) = coeffs[i % coeffs.len()]; Complex64::new(a + 0.1 * i as f64, b) })
            .collect();
        let rotated: Vec<Vec<Complex64>> = cands
            .iter()
            .zip(phases.iter().cycle())
            .map(|(c, &ph)| c.signature.iter().map(|v| v * Complex64::from_polar(1.0, ph)).collect())
            .collect();
        let rot_cands: Vec<Candidate> = cands
            .iter()
            .zip(&rotated)
            .map(|(c, v)| Candidate { breaker: c.breaker, signature: v, after: c.after })
            .collect();
        let a = project(&delta, &cands).unwrap().unwrap();
        let b = project(&delta, &rot_cands).unwrap().unwrap();
        for ((la, sa), (lb, sb)) in a.scores.iter().zip(&b.scores) {
            prop_assert_eq!(la, lb);
            prop_assert!((sa - sb).abs() <= 1e-12);
        }
    }
}

#[test]
fn ieee33_has_80_rank_one_keys() {
    let g = feeder_topo::network::ieee33();
    let set = SignatureSet::compute(&g, Execution::default()).unwrap();
    assert_eq!(set.len(), 80);
    let worst = set
        .keys()
        .iter()
        .map(|k| rank_one_ratio(&g, k).unwrap())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst}");
}
