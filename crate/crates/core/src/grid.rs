//! Feeder graph, switch statuses and the linear-algebra view of a topology:
//! incidence matrix, bus admittance matrix, its slack-grounded
//! pseudo-inverse, the linearized voltage map and a nonlinear power-flow
//! reference solver.
//!
//! Everything is in per-unit. Bus 0 (internal index) is always the slack.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, ZERO};
use crate::parallel::Execution;

/// Default power-flow tolerance (largest voltage update, p.u.).
pub const PF_TOL: f64 = 1e-10;
pub const PF_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Nominal active demand, kW.
    pub p_kw: f64,
    /// Nominal reactive demand, kvar.
    pub q_kvar: f64,
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    /// Internal bus index of the sending end.
    pub from: usize,
    /// Internal bus index of the receiving end.
    pub to: usize,
    /// Series admittance, per-unit.
    pub admittance: Complex64,
    /// Zero-based breaker index, if the line is switchable.
    pub switch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Base {
    pub kv: f64,
    pub mva: f64,
}

impl Base {
    pub fn impedance_ohm(&self) -> f64 {
        self.kv * self.kv / self.mva
    }

    pub fn power_kva(&self) -> f64 {
        self.mva * 1000.0
    }
}

/// A feeder: buses (slack first), lines with per-unit admittances and the
/// breaker map.
#[derive(Debug, Clone)]
pub struct Grid {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    /// `switch_lines[l]` is the line carrying breaker `l`.
    switch_lines: Vec<usize>,
    base: Base,
    u_n: f64,
    index_of: HashMap<usize, usize>,
}

impl Grid {
    /// Builds and validates a grid. The slack bus is moved to internal
    /// index 0; other buses keep their relative order. Line endpoints are
    /// given as bus ids; switch ids are 1-based and must cover `1..=r`.
    pub fn new(buses: Vec<Bus>, lines: Vec<(usize, usize, Complex64, Option<usize>)>, base: Base) -> Result<Self> {
        let slack: Vec<_> = buses.iter().filter(|b| b.is_slack).collect();
        if slack.len() != 1 {
            return Err(Error::InvalidGrid(format!(
                "expected exactly one slack bus, found {}",
                slack.len()
            )));
        }
        if buses.len() < 2 {
            return Err(Error::InvalidGrid("need at least two buses".into()));
        }
        if !(base.kv > 0.0 && base.mva > 0.0) {
            return Err(Error::InvalidGrid("base kV and MVA must be positive".into()));
        }
        let mut ordered = Vec::with_capacity(buses.len());
        ordered.extend(buses.iter().filter(|b| b.is_slack).cloned());
        ordered.extend(buses.iter().filter(|b| !b.is_slack).cloned());

        let mut index_of = HashMap::new();
        for (i, b) in ordered.iter().enumerate() {
            if index_of.insert(b.id, i).is_some() {
                return Err(Error::InvalidGrid(format!("duplicate bus id {}", b.id)));
            }
        }

        let mut out_lines = Vec::with_capacity(lines.len());
        let mut seen_switch = Vec::new();
        for (from_id, to_id, y, sw) in lines {
            let from = *index_of
                .get(&from_id)
                .ok_or_else(|| Error::InvalidGrid(format!("line references unknown bus {from_id}")))?;
            let to = *index_of
                .get(&to_id)
                .ok_or_else(|| Error::InvalidGrid(format!("line references unknown bus {to_id}")))?;
            if from == to {
                return Err(Error::InvalidGrid(format!("self-loop at bus {from_id}")));
            }
            if !(y.re > 0.0) || !y.im.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "line {from_id}-{to_id} admittance must have positive real part"
                )));
            }
            let switch = match sw {
                Some(0) => {
                    return Err(Error::InvalidGrid("switch ids are 1-based".into()));
                }
                Some(id) => {
                    seen_switch.push((id, out_lines.len()));
                    Some(id - 1)
                }
                None => None,
            };
            out_lines.push(Line {
                from,
                to,
                admittance: y,
                switch,
            });
        }
        seen_switch.sort_unstable();
        let r = seen_switch.len();
        if r > 32 {
            return Err(Error::InvalidGrid("at most 32 switches are supported".into()));
        }
        for (k, (id, _)) in seen_switch.iter().enumerate() {
            if *id != k + 1 {
                return Err(Error::InvalidGrid("switch ids must be distinct and cover 1..r".into()));
            }
        }
        let switch_lines = seen_switch.into_iter().map(|(_, l)| l).collect();

        let grid = Grid {
            buses: ordered,
            lines: out_lines,
            switch_lines,
            base,
            u_n: 1.0,
            index_of,
        };
        if !grid.is_connected(&SwitchStatus::all_closed(grid.num_switches())) {
            return Err(Error::InvalidGrid(
                "graph is disconnected even with all switches closed".into(),
            ));
        }
        Ok(grid)
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn num_switches(&self) -> usize {
        self.switch_lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn base(&self) -> Base {
        self.base
    }

    /// Nominal slack voltage, per-unit.
    pub fn u_n(&self) -> f64 {
        self.u_n
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    pub fn bus_id(&self, index: usize) -> usize {
        self.buses[index].id
    }

    pub fn switch_line(&self, breaker: usize) -> &Line {
        &self.lines[self.switch_lines[breaker]]
    }

    /// Nominal injected complex power per bus, per-unit (loads negative,
    /// slack zero).
    pub fn nominal_injection(&self) -> CVector {
        let s_base = self.base.power_kva();
        CVector::from_iterator(
            self.num_buses(),
            self.buses.iter().map(|b| {
                if b.is_slack {
                    ZERO
                } else {
                    Complex64::new(-b.p_kw / s_base, -b.q_kvar / s_base)
                }
            }),
        )
    }

    fn check_status(&self, sigma: &SwitchStatus) -> Result<()> {
        if sigma.len() != self.num_switches() {
            return Err(Error::StatusLength {
                expected: self.num_switches(),
                got: sigma.len(),
            });
        }
        Ok(())
    }

    /// Lines carrying current under `sigma`: fixed lines plus closed switches.
    pub fn energized_lines<'a>(&'a self, sigma: &'a SwitchStatus) -> impl Iterator<Item = &'a Line> + 'a {
        self.lines
            .iter()
            .filter(move |l| l.switch.is_none_or(|s| sigma.is_closed(s)))
    }

    pub fn is_connected(&self, sigma: &SwitchStatus) -> bool {
        if sigma.len() != self.num_switches() {
            return false;
        }
        let n = self.num_buses();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut components = n;
        for l in self.energized_lines(sigma) {
            let a = find(&mut parent, l.from);
            let b = find(&mut parent, l.to);
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components == 1
    }

    pub fn check_admissible(&self, sigma: &SwitchStatus) -> Result<()> {
        self.check_status(sigma)?;
        if !self.is_connected(sigma) {
            return Err(Error::Disconnected {
                status: sigma.to_string(),
            });
        }
        Ok(())
    }

    /// All admissible statuses, in increasing mask order.
    pub fn admissible_statuses(&self) -> Vec<SwitchStatus> {
        let r = self.num_switches();
        (0..(1u64 << r))
            .map(|m| SwitchStatus::from_mask(m, r))
            .filter(|s| self.is_connected(s))
            .collect()
    }

    /// Incidence matrix restricted to energized lines (rows in line order),
    /// `+1` at the sending end and `-1` at the receiving end.
    pub fn incidence_matrix(&self, sigma: &SwitchStatus) -> Result<DMatrix<f64>> {
        self.check_admissible(sigma)?;
        let rows: Vec<&Line> = self.energized_lines(sigma).collect();
        let mut a = DMatrix::zeros(rows.len(), self.num_buses());
        for (k, l) in rows.iter().enumerate() {
            a[(k, l.from)] = 1.0;
            a[(k, l.to)] = -1.0;
        }
        Ok(a)
    }

    /// Bus admittance matrix (shunts neglected).
    pub fn bus_admittance(&self, sigma: &SwitchStatus) -> Result<CMatrix> {
        self.check_admissible(sigma)?;
        let n = self.num_buses();
        let mut y = CMatrix::zeros(n, n);
        for l in self.energized_lines(sigma) {
            stamp(&mut y, l);
        }
        Ok(y)
    }

    /// `Y_l a_l a_l^T` for breaker `l`: the change in the admittance matrix
    /// when that breaker closes.
    pub fn switch_update(&self, breaker: usize) -> CMatrix {
        let n = self.num_buses();
        let mut y = CMatrix::zeros(n, n);
        stamp(&mut y, self.switch_line(breaker));
        y
    }

    /// Grounded pseudo-inverse for status `sigma`.
    pub fn pseudo_inverse(&self, sigma: &SwitchStatus) -> Result<CMatrix> {
        pseudo_inverse(&self.bus_admittance(sigma)?)
    }

    /// Nonlinear power flow under `sigma` for injections `s`.
    pub fn solve_power_flow(&self, sigma: &SwitchStatus, s: &CVector, tol: f64, max_iter: usize) -> Result<CVector> {
        let x = self.pseudo_inverse(sigma)?;
        solve_power_flow(&x, s, self.u_n, tol, max_iter)
    }
}

/// Pseudo-inverses of every admissible status of a grid, computed once.
#[derive(Debug, Clone)]
pub struct TopologySet {
    statuses: Vec<SwitchStatus>,
    x: HashMap<u64, CMatrix>,
}

impl TopologySet {
    pub fn build(grid: &Grid, exec: Execution) -> Result<Self> {
        let statuses = grid.admissible_statuses();
        let mats = crate::parallel::map_slice(exec, &statuses, |s| grid.pseudo_inverse(s));
        let mut x = HashMap::with_capacity(statuses.len());
        for (s, m) in statuses.iter().zip(mats) {
            x.insert(s.mask(), m?);
        }
        Ok(TopologySet { statuses, x })
    }

    pub fn statuses(&self) -> &[SwitchStatus] {
        &self.statuses
    }

    pub fn get(&self, sigma: &SwitchStatus) -> Option<&CMatrix> {
        self.x.get(&sigma.mask())
    }

    pub fn contains(&self, sigma: &SwitchStatus) -> bool {
        self.x.contains_key(&sigma.mask())
    }
}

fn stamp(y: &mut CMatrix, l: &Line) {
    let v = l.admittance;
    y[(l.from, l.from)] += v;
    y[(l.to, l.to)] += v;
    y[(l.from, l.to)] -= v;
    y[(l.to, l.from)] -= v;
}

/// Breaker states; bit `l` set means breaker `l` is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchStatus {
    mask: u64,
    len: u8,
}

impl SwitchStatus {
    pub fn from_mask(mask: u64, len: usize) -> Self {
        assert!(len <= 63, "at most 63 breakers");
        let mask = if len == 0 { 0 } else { mask & ((1u64 << len) - 1) };
        SwitchStatus { mask, len: len as u8 }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mask = bits
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | (1 << i) } else { m });
        Self::from_mask(mask, bits.len())
    }

    pub fn all_closed(len: usize) -> Self {
        Self::from_mask(u64::MAX, len)
    }

    pub fn all_open(len: usize) -> Self {
        Self::from_mask(0, len)
    }

    pub fn mask(&self) -> u64 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_closed(&self, breaker: usize) -> bool {
        self.mask >> breaker & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.len()).map(|l| self.is_closed(l)).collect()
    }

    pub fn toggled(&self, breaker: usize) -> Self {
        assert!(breaker < self.len(), "breaker index out of range");
        SwitchStatus {
            mask: self.mask ^ (1 << breaker),
            len: self.len,
        }
    }

    pub fn with(&self, breaker: usize, closed: bool) -> Self {
        assert!(breaker < self.len(), "breaker index out of range");
        let mask = if closed {
            self.mask | (1 << breaker)
        } else {
            self.mask & !(1 << breaker)
        };
        SwitchStatus { mask, len: self.len }
    }

    /// Number of breakers whose state differs.
    pub fn distance(&self, other: &SwitchStatus) -> u32 {
        (self.mask ^ other.mask).count_ones()
    }
}

impl fmt::Display for SwitchStatus {
    /// Breaker S1 first, e.g. `11101`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in 0..self.len() {
            f.write_str(if self.is_closed(l) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SwitchStatus {
    type Err = Error;

    /// Accepts `11101`, `1,1,1,0,1` or `(1,1,1,0,1)`.
    fn from_str(s: &str) -> Result<Self> {
        let bits: Vec<bool> = s
            .chars()
            .filter(|c| !matches!(c, ',' | ' ' | '(' | ')' | '[' | ']'))
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Config(format!("invalid switch status character {other:?}"))),
            })
            .collect::<Result<_>>()?;
        if bits.len() > 63 {
            return Err(Error::Config("switch status too long".into()));
        }
        Ok(SwitchStatus::from_bits(&bits))
    }
}

/// Grounded pseudo-inverse `X` of an admittance matrix: the unique
/// symmetric matrix with `X Y = I - 1 e_1^T` and `X e_1 = 0`. Computed by
/// inverting the slack-reduced matrix and re-embedding it.
pub fn pseudo_inverse(y: &CMatrix) -> Result<CMatrix> {
    let n = y.nrows();
    if n != y.ncols() || n == 0 {
        return Err(Error::Factorization);
    }
    let reduced = y.view((1, 1), (n - 1, n - 1)).clone_owned();
    let scale = y.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let lu = reduced.lu();
    // Reject pivots that are zero relative to the matrix scale.
    let u = lu.u();
    let min_pivot = u.diagonal().iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if n > 1 && !(min_pivot > 1e-13 * scale) {
        return Err(Error::Factorization);
    }
    let inv = lu.try_inverse().ok_or(Error::Factorization)?;
    let mut x = CMatrix::zeros(n, n);
    x.view_mut((1, 1), (n - 1, n - 1)).copy_from(&inv);
    // Symmetrize to remove round-off asymmetry.
    let xt = x.transpose();
    x = (x + xt).map(|v| v * 0.5);
    Ok(x)
}

/// Linearized voltages `u = U_N 1 + X conj(s) / U_N`.
pub fn approx_voltage(x: &CMatrix, s: &CVector, u_n: f64) -> CVector {
    let rhs = s.map(|v| v.conj() / u_n);
    let mut u = x * rhs;
    for v in u.iter_mut() {
        *v += u_n;
    }
    u
}

/// Fixed-point solution of `u = U_N 1 + X conj(s / u)` (constant-power
/// loads, ideal slack). Stops when the largest voltage update is `<= tol`.
pub fn solve_power_flow(x: &CMatrix, s: &CVector, u_n: f64, tol: f64, max_iter: usize) -> Result<CVector> {
    let flat = CVector::from_element(x.nrows(), Complex64::new(u_n, 0.0));
    solve_power_flow_from(x, s, u_n, flat, tol, max_iter)
}

/// [`solve_power_flow`] started from `u0` instead of the flat profile.
pub fn solve_power_flow_from(
    x: &CMatrix,
    s: &CVector,
    u_n: f64,
    u0: CVector,
    tol: f64,
    max_iter: usize,
) -> Result<CVector> {
    let n = x.nrows();
    for len in [s.len(), u0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let mut u = u0;
    let mut current = CVector::zeros(n);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        for v in 0..n {
            current[v] = (s[v] / u[v]).conj();
        }
        let mut next = x * &current;
        for v in next.iter_mut() {
            *v += u_n;
        }
        if next.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            residual = f64::INFINITY;
            break;
        }
        residual = (&next - &u).iter().map(|d| d.norm()).fold(0.0, f64::max);
        u = next;
        if residual <= tol {
            return Ok(u);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Power-balance mismatch `max_v |u_v conj((Y u)_v) - s_v|` over non-slack buses.
pub fn power_mismatch(y: &CMatrix, u: &CVector, s: &CVector) -> f64 {
    let i = y * u;
    (1..u.len())
        .map(|v| (u[v] * i[v].conj() - s[v]).norm())
        .fold(0.0, f64::max)
}
