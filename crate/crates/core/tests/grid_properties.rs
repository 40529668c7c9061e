mod common;

use feeder_topo::grid::{approx_voltage, power_mismatch, solve_power_flow, PF_MAX_ITER};
use feeder_topo::linalg::CMatrix;
use feeder_topo::SwitchStatus;
use num_complex::Complex64;
use proptest::prelude::*;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn voltage_gap(grid: &feeder_topo::Grid, scale: f64) -> f64 {
    let sigma = SwitchStatus::all_closed(grid.num_switches());
    let x = grid.pseudo_inverse(&sigma).unwrap();
    let s = grid.nominal_injection() * Complex64::new(scale, 0.0);
    let exact = solve_power_flow(&x, &s, 1.0, 1e-14, 1000).unwrap();
    (approx_voltage(&x, &s, 1.0) - exact)
        .iter()
        .map(|d| d.norm())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn admittance_is_symmetric_and_annihilates_ones(spec in common::grid_spec(10, 3)) {
        let g = spec.build().expect("generated grids are valid");
        for sigma in g.admissible_statuses() {
            let y = g.bus_admittance(&sigma).unwrap();
            let scale = max_abs(&y);
            prop_assert!(max_abs(&(&y - y.transpose())) <= 1e-15 * scale);
            for row in y.row_iter() {
                prop_assert!(row.iter().sum::<Complex64>().norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn pseudo_inverse_satisfies_defining_equations(spec in common::grid_spec(10, 3)) {
        let g = spec.build().expect("generated grids are valid");
        let n = g.num_buses();
        let mut target = CMatrix::identity(n, n);
        for r in 0..n {
            target[(r, 0)] -= Complex64::new(1.0, 0.0);
        }
        for sigma in g.admissible_statuses() {
            let y = g.bus_admittance(&sigma).unwrap();
            let x = g.pseudo_inverse(&sigma).unwrap();
            prop_assert!(max_abs(&(&x * &y - &target)) <= 1e-10, "{}", max_abs(&(&x * &y - &target)));
            prop_assert!(x.column(0).iter().all(|v| v.norm() == 0.0));
            prop_assert!(max_abs(&(&x - x.transpose())) <= 1e-12 * max_abs(&x));
        }
    }

    #[test]
    fn closing_a_breaker_adds_a_rank_one_stamp(spec in common::grid_spec(10, 3)) {
        let g = spec.build().expect("generated grids are valid");
        for sigma in g.admissible_statuses() {
            for l in 0..g.num_switches() {
                let closed = sigma.with(l, true);
                let open = sigma.with(l, false);
                let (Ok(yc), Ok(yo)) = (g.bus_admittance(&closed), g.bus_admittance(&open)) else { continue };
                let d = &yc - &yo - g.switch_update(l);
                prop_assert!(max_abs(&d) <= 1e-12 * max_abs(&yc));
            }
        }
    }

    #[test]
    fn power_flow_balances_injections(spec in common::grid_spec(12, 2)) {
        let g = spec.build().expect("generated grids are valid");
        let sigma = SwitchStatus::all_closed(g.num_switches());
        let x = g.pseudo_inverse(&sigma).unwrap();
        let s = g.nominal_injection();
        let u = solve_power_flow(&x, &s, 1.0, 1e-12, PF_MAX_ITER).unwrap();
        prop_assert!(power_mismatch(&g.bus_admittance(&sigma).unwrap(), &u, &s) <= 1e-9);
    }

    #[test]
    fn linearization_error_is_quadratic_in_load(spec in common::grid_spec(12, 2)) {
        let g = spec.build().expect("generated grids are valid");
        let full = voltage_gap(&g, 1.0);
        let half = voltage_gap(&g, 0.5);
        prop_assert!(full >= 3.0 * half, "gap {full} vs {half}");
    }
}

#[test]
fn ieee33_linearization_gap_and_ratio() {
    let g = feeder_topo::network::ieee33();
    let full = voltage_gap(&g, 1.0);
    let half = voltage_gap(&g, 0.5);
    assert!(full <= 1e-2, "{full}");
    assert!(full >= 3.0 * half, "{full} vs {half}");
}
