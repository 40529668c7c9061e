use std::sync::OnceLock;

use feeder_topo::detection::DetectorConfig;
use feeder_topo::grid::TopologySet;
use feeder_topo::network::ieee33;
use feeder_topo::placement::{
    certify, greedy_place, observability_full, seed_placement, PlacementSearchConfig, CERT_MARGIN,
};
use feeder_topo::signature::{LibraryEntry, SignatureSet};
use feeder_topo::sim::{monte_carlo, samples_for, MonteCarloConfig, NoiseConfig, Probe};
use feeder_topo::{Execution, Grid, Placement, SignatureKey, SignatureLibrary, SwitchStatus};
use num_complex::Complex64;
use proptest::prelude::*;

fn ieee() -> &'static (Grid, TopologySet, SignatureSet) {
    static F: OnceLock<(Grid, TopologySet, SignatureSet)> = OnceLock::new();
    F.get_or_init(|| {
        let g = ieee33();
        let topo = TopologySet::build(&g, Execution::default()).unwrap();
        let set = SignatureSet::from_topologies(&g, &topo, Execution::default()).unwrap();
        (g, topo, set)
    })
}

/// Library of arbitrary unit vectors, in the given order.
fn library(vectors: &[Vec<Complex64>]) -> SignatureLibrary {
    let g = &ieee().0;
    let dim = vectors[0].len();
    let p = Placement::from_bus_ids(g, &(2..2 + dim).collect::<Vec<_>>()).unwrap();
    let entries = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = feeder_topo::linalg::norm(v);
            LibraryEntry {
                key: SignatureKey::new(0, SwitchStatus::from_mask(2 * i as u64, 20)),
                vector: v.iter().map(|x| x / n).collect(),
            }
        })
        .collect();
    SignatureLibrary::from_parts(entries, p, 20, "synthetic".into())
}

fn vectors() -> impl Strategy<Value = Vec<Vec<Complex64>>> {
    (2..6usize).prop_flat_map(|dim| {
        proptest::collection::vec(
            proptest::collection::vec(
                (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b)),
                dim,
            )
            .prop_filter("nonzero", |v| feeder_topo::linalg::norm(v) > 1e-3),
            2..9,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gram_report_properties(vs in vectors(), perm_seed in any::<u64>(), drop in 0..8usize) {
        let lib = library(&vs);
        for e in lib.entries() {
            let d = feeder_topo::linalg::inner(&e.vector, &e.vector);
            prop_assert!((d.re - 1.0).abs() <= 1e-12 && d.im.abs() <= 1e-12);
        }
        let r = observability_full(&lib);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r.max));
        prop_assert_eq!(r.offending().is_some(), r.max >= 1.0 - CERT_MARGIN);

        let mut shuffled = vs.clone();
        let mut s = perm_seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert!((observability_full(&library(&shuffled)).max - r.max).abs() <= 1e-15);

        if vs.len() > 2 {
            let mut fewer = vs.clone();
            fewer.remove(drop % vs.len());
            prop_assert!(observability_full(&library(&fewer)).max <= r.max);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    /// Empirical: adding a bus to a placement whose particular libraries are
    /// certified keeps them certified. The Gram maximum itself can rise.
    #[test]
    fn adding_a_bus_keeps_a_certificate(ids in proptest::sample::subsequence((2..=33usize).collect::<Vec<_>>(), 1..12), extra in 1..=33usize) {
        let (g, _, set) = ieee();
        let p = Placement::from_bus_ids(g, &ids).unwrap();
        prop_assume!(!p.contains(extra));
        let Some((_, before)) = certify(g, set, &p).unwrap() else { return Ok(()) };
        prop_assume!(before.certified());
        let (_, after) = certify(g, set, &p.with_bus(g, extra).unwrap()).unwrap().unwrap();
        prop_assert!(after.certified(), "{:?} + {extra}: {} -> {}", ids, before.max, after.max);
    }
}

#[test]
fn greedy_search_is_deterministic() {
    let (g, topo, set) = ieee();
    let seed = seed_placement(g, set).unwrap();
    let mut cfg = PlacementSearchConfig::new(seed.clone(), seed.len() + 2, NoiseConfig::for_frequency(1.0).unwrap());
    cfg.runs = 8;
    cfg.tstop = 50;
    cfg.seed = 9;
    cfg.strict_improvement = true;
    let a = greedy_place(g, topo, set, &cfg, Execution::Parallel).unwrap();
    let b = greedy_place(g, topo, set, &cfg, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.audit[0].bus, None);
}

/// Grows the certified seed to seven sensors and compares its Monte Carlo
/// error with the P7 preset on common runs.
#[test]
fn greedy_growth_matches_p7_error_rate() {
    let (g, topo, set) = ieee();
    let seed = seed_placement(g, set).unwrap();
    let mut cfg = PlacementSearchConfig::new(seed, 7, NoiseConfig::for_frequency(1.0).unwrap());
    cfg.runs = 100;
    cfg.tstop = 200;
    cfg.seed = 1;
    let found = greedy_place(g, topo, set, &cfg, Execution::default()).unwrap();
    assert_eq!(found.bus_ids.len(), 7);

    let libs = [
        set.restrict(&found.placement(g).unwrap()).unwrap(),
        set.restrict(&Placement::preset(g, "P7").unwrap()).unwrap(),
    ];
    let probes: Vec<Probe> = libs
        .iter()
        .map(|l| Probe {
            library: l,
            config: DetectorConfig::noisy_for_sensors(7),
        })
        .collect();
    let mc = MonteCarloConfig {
        noise: NoiseConfig::for_frequency(1.0).unwrap(),
        samples: samples_for(1.0),
        runs: 1000,
        seed: 77,
        lag: 5,
    };
    let r = monte_carlo(g, topo, &probes, &mc, Execution::default()).unwrap();
    let (ours, p7) = (r[0].percent_errors(), r[1].percent_errors());
    println!("greedy {:?}: {ours:.2}% vs P7 {p7:.2}%", found.bus_ids);
    assert!(ours <= p7 + 1.0, "{ours} vs {p7}");
}
