//! Text network format.
//!
//! ```text
//! base_kv,12.66
//! base_mva,10
//! [buses]
//! bus_id,P_kW,Q_kvar,is_slack
//! 1,0,0,1
//! ...
//! [lines]
//! from_bus,to_bus,R_ohm,X_ohm,switch_id
//! 1,2,0.0922,0.0470,
//! 8,21,2.0,2.0,1
//! ```
//!
//! `#` starts a comment; blank lines are ignored; the first row of each
//! section is a column header. Impedances are converted to per-unit
//! admittances at load time.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Base, Bus, Grid};

const IEEE33: &str = include_str!("../data/ieee33.csv");

/// The IEEE 33-bus feeder with tie switches S1..S5 on lines 8-21, 9-15,
/// 12-22, 18-33 and 25-29.
pub fn ieee33() -> Grid {
    parse_network(IEEE33, "ieee33.csv").expect("bundled feeder data is valid")
}

pub fn ieee33_text() -> &'static str {
    IEEE33
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text, &path.display().to_string())
}

#[derive(PartialEq)]
enum Section {
    Header,
    Buses,
    Lines,
}

pub fn parse_network(text: &str, origin: &str) -> Result<Grid> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut section = Section::Header;
    let mut expect_header = false;
    let mut base_kv = None;
    let mut base_mva = None;
    let mut buses = Vec::new();
    let mut raw_lines = Vec::new();

    for (no, raw) in text.lines().enumerate() {
        let no = no + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "[buses]" => {
                section = Section::Buses;
                expect_header = true;
                continue;
            }
            "[lines]" => {
                section = Section::Lines;
                expect_header = true;
                continue;
            }
            _ => {}
        }
        if expect_header {
            expect_header = false;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |i: usize, what: &str| -> Result<f64> {
            fields
                .get(i)
                .ok_or_else(|| err(no, format!("missing {what}")))?
                .parse::<f64>()
                .map_err(|e| err(no, format!("bad {what}: {e}")))
        };
        let int = |i: usize, what: &str| -> Result<usize> {
            fields
                .get(i)
                .ok_or_else(|| err(no, format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|e| err(no, format!("bad {what}: {e}")))
        };
        match section {
            Section::Header => match fields[0].to_ascii_lowercase().as_str() {
                "base_kv" => base_kv = Some(num(1, "base_kv")?),
                "base_mva" => base_mva = Some(num(1, "base_mva")?),
                other => return Err(err(no, format!("unknown header key {other:?}"))),
            },
            Section::Buses => {
                let slack = match fields.get(3).copied().unwrap_or("0") {
                    "1" | "true" | "yes" => true,
                    "0" | "false" | "no" | "" => false,
                    other => return Err(err(no, format!("bad is_slack {other:?}"))),
                };
                buses.push(Bus {
                    id: int(0, "bus_id")?,
                    p_kw: num(1, "P_kW")?,
                    q_kvar: num(2, "Q_kvar")?,
                    is_slack: slack,
                });
            }
            Section::Lines => {
                let switch = match fields.get(4).copied().unwrap_or("") {
                    "" => None,
                    _ => Some(int(4, "switch_id")?),
                };
                raw_lines.push((
                    no,
                    int(0, "from_bus")?,
                    int(1, "to_bus")?,
                    num(2, "R_ohm")?,
                    num(3, "X_ohm")?,
                    switch,
                ));
            }
        }
    }

    let base = Base {
        kv: base_kv.ok_or_else(|| err(0, "missing base_kv".into()))?,
        mva: base_mva.ok_or_else(|| err(0, "missing base_mva".into()))?,
    };
    if !(base.kv > 0.0 && base.mva > 0.0) {
        return Err(err(0, "base_kv and base_mva must be positive".into()));
    }
    let z_base = base.impedance_ohm();
    let mut lines = Vec::with_capacity(raw_lines.len());
    for (no, from, to, r, x, sw) in raw_lines {
        let z = Complex64::new(r, x) / z_base;
        if z.norm() == 0.0 {
            return Err(err(no, "zero impedance".into()));
        }
        lines.push((from, to, z.inv(), sw));
    }
    Grid::new(buses, lines, base)
}

/// SHA-256 over the per-unit model: base, buses in internal order and
/// lines with bit-exact admittances.
pub fn fingerprint(grid: &Grid) -> String {
    let mut canon = String::new();
    let b = grid.base();
    let _ = writeln!(canon, "base {:016x} {:016x}", b.kv.to_bits(), b.mva.to_bits());
    for bus in grid.buses() {
        let _ = writeln!(
            canon,
            "bus {} {:016x} {:016x} {}",
            bus.id,
            bus.p_kw.to_bits(),
            bus.q_kvar.to_bits(),
            bus.is_slack
        );
    }
    for l in grid.lines() {
        let _ = writeln!(
            canon,
            "line {} {} {:016x} {:016x} {:?}",
            grid.bus_id(l.from),
            grid.bus_id(l.to),
            l.admittance.re.to_bits(),
            l.admittance.im.to_bits(),
            l.switch
        );
    }
    let digest = Sha256::digest(canon.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, byte| {
        let _ = write!(s, "{byte:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SwitchStatus;

    #[test]
    fn bundled_feeder_shape() {
        let g = ieee33();
        assert_eq!(g.num_buses(), 33);
        assert_eq!(g.num_lines(), 37);
        assert_eq!(g.num_switches(), 5);
        assert_eq!(g.bus_id(0), 1);
        let total_p: f64 = g.buses().iter().map(|b| b.p_kw).sum();
        let total_q: f64 = g.buses().iter().map(|b| b.q_kvar).sum();
        assert_eq!(total_p, 3715.0);
        assert_eq!(total_q, 2300.0);
        let s3 = g.switch_line(2);
        assert_eq!((g.bus_id(s3.from), g.bus_id(s3.to)), (12, 22));
    }

    #[test]
    fn radial_status_has_32_energized_lines() {
        let g = ieee33();
        let a = g.incidence_matrix(&SwitchStatus::all_open(5)).unwrap();
        assert_eq!(a.nrows(), 32);
        assert_eq!(a.ncols(), 33);
    }

    #[test]
    fn every_status_of_bundled_feeder_is_admissible() {
        assert_eq!(ieee33().admissible_statuses().len(), 32);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "base_kv,1\nbase_mva,1\n[buses]\nid,p,q,s\n1,0,0,1\n2,abc,0,0\n";
        match parse_network(text, "t.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fingerprint_tracks_data() {
        let a = fingerprint(&ieee33());
        assert_eq!(a.len(), 64);
        assert_eq!(a, fingerprint(&ieee33()));
        let altered = ieee33_text().replace("25,29,0.5000", "25,29,0.5001");
        let b = fingerprint(&parse_network(&altered, "x").unwrap());
        assert_ne!(a, b);
    }
}
