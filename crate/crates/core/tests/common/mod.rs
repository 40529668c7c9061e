#![allow(dead_code)]

use feeder_topo::grid::{Base, Bus};
use feeder_topo::Grid;
use num_complex::Complex64;
use proptest::prelude::*;

/// Random radial feeder description: parent links, impedances (ohm),
/// loads (kW, kvar) and tie switches between distinct non-adjacent buses.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub parents: Vec<usize>,
    pub z: Vec<(f64, f64)>,
    pub loads: Vec<(f64, f64)>,
    pub ties: Vec<(usize, usize, f64, f64)>,
}

impl GridSpec {
    pub fn build(&self) -> Option<Grid> {
        let n = self.parents.len() + 1;
        let buses = (1..=n)
            .map(|id| Bus {
                id,
                p_kw: if id == 1 { 0.0 } else { self.loads[id - 2].0 },
                q_kvar: if id == 1 { 0.0 } else { self.loads[id - 2].1 },
                is_slack: id == 1,
            })
            .collect();
        let base = Base { kv: 12.66, mva: 10.0 };
        let zb = base.impedance_ohm();
        let mut lines: Vec<_> = self
            .parents
            .iter()
            .zip(&self.z)
            .enumerate()
            .map(|(k, (&p, &(r, x)))| (p, k + 2, (Complex64::new(r, x) / zb).inv(), None))
            .collect();
        let mut used = Vec::new();
        for &(a, b, r, x) in &self.ties {
            let (a, b) = (a % n + 1, b % n + 1);
            let key = (a.min(b), a.max(b));
            let adjacent = self.parents.get(key.1.wrapping_sub(2)) == Some(&key.0);
            if a == b || adjacent || used.contains(&key) {
                continue;
            }
            used.push(key);
            lines.push((a, b, (Complex64::new(r, x) / zb).inv(), Some(used.len())));
        }
        Grid::new(buses, lines, base).ok()
    }
}

pub fn grid_spec(max_buses: usize, max_ties: usize) -> impl Strategy<Value = GridSpec> {
    (3..=max_buses).prop_flat_map(move |n| {
        let parents = (2..=n).map(|k| 1..k).collect::<Vec<_>>();
        (
            parents,
            proptest::collection::vec((0.05..1.5f64, 0.02..1.2f64), n - 1),
            proptest::collection::vec((10.0..300.0f64, 0.0..200.0f64), n - 1),
            proptest::collection::vec((0..n, 0..n, 0.1..2.0f64, 0.1..2.0f64), 0..=max_ties),
        )
            .prop_map(|(parents, z, loads, ties)| GridSpec {
                parents,
                z,
                loads,
                ties,
            })
    })
}
