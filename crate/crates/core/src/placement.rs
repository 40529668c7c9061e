//! PMU placement: Gram-matrix observability certificates and a greedy
//! Monte Carlo search that grows a placement one bus at a time.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{default_min_norm, DetectorConfig, DEFAULT_TAU, NOISY_MIN_PROJ};
use crate::error::{Error, Result};
use crate::grid::{Grid, SwitchStatus, TopologySet};
use crate::linalg;
use crate::parallel::{map_slice, Execution};
use crate::signature::{particular_library, Placement, SignatureKey, SignatureLibrary, SignatureSet};
use crate::sim::{monte_carlo, MonteCarloConfig, NoiseConfig, Probe};

/// Certificates hold when every off-diagonal Gram magnitude is below
/// `1 - CERT_MARGIN`.
pub const CERT_MARGIN: f64 = 1e-6;

/// Worst pair of one particular library.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContextGram {
    pub status: SwitchStatus,
    pub max: f64,
    /// Zero-based breakers of the worst pair, if the library has two columns.
    pub pair: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    /// Largest `|G_uv|`, `u != v`.
    pub max: f64,
    /// Library indices of the largest entry.
    pub worst: Option<(usize, usize)>,
    /// Per-status breakdown (particular certificate only).
    pub contexts: Vec<ContextGram>,
}

impl GramReport {
    pub fn certified(&self) -> bool {
        self.max < 1.0 - CERT_MARGIN
    }

    /// The worst pair when the certificate fails.
    pub fn offending(&self) -> Option<(usize, usize)> {
        if self.certified() {
            None
        } else {
            self.worst
        }
    }
}

fn gram_max(columns: &[&[num_complex::Complex64]]) -> (f64, Option<(usize, usize)>) {
    let mut max = 0.0;
    let mut worst = None;
    for u in 0..columns.len() {
        for v in u + 1..columns.len() {
            let g = linalg::inner(columns[u], columns[v]).norm();
            if worst.is_none() || g > max {
                max = g;
                worst = Some((u, v));
            }
        }
    }
    (max, worst)
}

/// Gram condition over every library column.
pub fn observability_full(lib: &SignatureLibrary) -> GramReport {
    let cols: Vec<&[_]> = lib.entries().iter().map(|e| e.vector.as_slice()).collect();
    let (max, worst) = gram_max(&cols);
    GramReport {
        max,
        worst,
        contexts: Vec::new(),
    }
}

/// Gram condition of the particular library of every admissible status;
/// `worst` holds library indices of the worst pair overall.
pub fn observability_particular(grid: &Grid, lib: &SignatureLibrary) -> GramReport {
    let mut report = GramReport {
        max: 0.0,
        worst: None,
        contexts: Vec::new(),
    };
    for status in grid.admissible_statuses() {
        let cands = particular_library(lib, &status);
        let cols: Vec<&[_]> = cands.iter().map(|c| c.signature).collect();
        let (max, pair) = gram_max(&cols);
        let pair = pair.map(|(u, v)| (cands[u].breaker, cands[v].breaker));
        if let Some((a, b)) = pair {
            if report.worst.is_none() || max > report.max {
                report.max = max;
                let index = |breaker: usize| {
                    let key = SignatureKey::new(breaker, status);
                    lib.entries().iter().position(|e| e.key == key)
                };
                report.worst = index(a).zip(index(b));
            }
        }
        report.contexts.push(ContextGram { status, max, pair });
    }
    report
}

/// Both reports for `placement`, or `None` when some transition leaves no
/// trace on the placement.
pub fn certify(grid: &Grid, set: &SignatureSet, placement: &Placement) -> Result<Option<(GramReport, GramReport)>> {
    match set.restrict(placement) {
        Ok(lib) => Ok(Some((observability_full(&lib), observability_particular(grid, &lib)))),
        Err(Error::Unobservable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Smallest-first greedy seed: start from the bus adjacent to the slack
/// and add the bus that most lowers the particular-library Gram maximum
/// until that certificate holds. Ties go to the lowest bus id.
///
/// The full-library certificate is not required: breakers whose loops share
/// no branch have identical signatures across each other's states, so it
/// fails on such feeders for every placement.
pub fn seed_placement(grid: &Grid, set: &SignatureSet) -> Result<Placement> {
    let slack = grid.bus_id(0);
    let adjacent = grid
        .lines()
        .iter()
        .filter(|l| l.switch.is_none())
        .filter_map(|l| match (l.from, l.to) {
            (0, o) | (o, 0) => Some(grid.bus_id(o)),
            _ => None,
        })
        .min()
        .ok_or_else(|| Error::InvalidGrid("slack bus has no fixed line".into()))?;
    let mut placement = Placement::from_bus_ids(grid, &[adjacent])?;
    loop {
        if let Some((_, part)) = certify(grid, set, &placement)? {
            if part.certified() {
                return Ok(placement);
            }
        }
        let mut best: Option<(f64, Placement)> = None;
        for b in grid.buses() {
            if b.id == slack || placement.contains(b.id) {
                continue;
            }
            let cand = placement.with_bus(grid, b.id)?;
            let score = match certify(grid, set, &cand)? {
                Some((_, part)) => part.max,
                None => f64::INFINITY,
            };
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, cand));
            }
        }
        match best {
            Some((_, p)) => placement = p,
            None => {
                return Err(Error::InvalidPlacement(
                    "no placement certifies the particular library".into(),
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSearchConfig {
    pub initial: Placement,
    /// Monte Carlo runs per candidate.
    pub runs: usize,
    /// Samples per run.
    pub tstop: usize,
    pub target_size: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub tau: usize,
    pub min_proj: f64,
    /// Absolute gate; the per-sensor default when `None`.
    pub min_norm: Option<f64>,
    /// Stop when the best candidate does not lower the error count.
    pub strict_improvement: bool,
}

impl PlacementSearchConfig {
    pub fn new(initial: Placement, target_size: usize, noise: NoiseConfig) -> Self {
        PlacementSearchConfig {
            initial,
            runs: 100,
            tstop: 1000,
            target_size,
            seed: 0,
            noise,
            tau: DEFAULT_TAU,
            min_proj: NOISY_MIN_PROJ,
            min_norm: None,
            strict_improvement: false,
        }
    }

    fn detector(&self, sensors: usize) -> DetectorConfig {
        DetectorConfig {
            tau: self.tau,
            min_proj: self.min_proj,
            ..DetectorConfig::noisy(self.min_norm.unwrap_or_else(|| default_min_norm(sensors)))
        }
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub step: usize,
    /// `None` for the baseline evaluation of the starting placement.
    pub bus: Option<usize>,
    pub runs: u64,
    pub aborted: u64,
    /// `None` when the candidate leaves a transition unobservable.
    pub errors: Option<u64>,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSearch {
    pub bus_ids: Vec<usize>,
    pub audit: Vec<AuditRow>,
    pub stopped_early: bool,
}

fn evaluate(
    grid: &Grid,
    topologies: &TopologySet,
    set: &SignatureSet,
    cfg: &PlacementSearchConfig,
    placement: &Placement,
) -> Result<Option<(u64, u64, u64)>> {
    let lib = match set.restrict(placement) {
        Ok(lib) => lib,
        Err(Error::Unobservable { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mc = MonteCarloConfig {
        noise: cfg.noise,
        samples: cfg.tstop,
        runs: cfg.runs,
        seed: cfg.seed,
        lag: cfg.tau,
    };
    let probe = Probe {
        library: &lib,
        config: cfg.detector(placement.len()),
    };
    let r = monte_carlo(grid, topologies, &[probe], &mc, Execution::Sequential)?[0];
    Ok(Some((r.total_errors(), r.runs, r.aborted)))
}

/// Greedy growth: at each step every bus outside the placement is scored
/// by the total error count over `runs` scenarios (the same scenarios for
/// every candidate); the lowest count wins, ties to the lowest bus id.
pub fn greedy_place(
    grid: &Grid,
    topologies: &TopologySet,
    set: &SignatureSet,
    cfg: &PlacementSearchConfig,
    exec: Execution,
) -> Result<PlacementSearch> {
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    if cfg.target_size > grid.num_buses() || cfg.target_size < cfg.initial.len() {
        return Err(Error::Config(format!(
            "target size {} outside {}..={}",
            cfg.target_size,
            cfg.initial.len(),
            grid.num_buses()
        )));
    }
    match certify(grid, set, &cfg.initial)? {
        Some((_, part)) if part.certified() => {}
        _ => {
            return Err(Error::InvalidPlacement(
                "initial placement does not certify the particular library".into(),
            ))
        }
    }

    let mut placement = cfg.initial.clone();
    let mut audit = Vec::new();
    let mut stopped_early = false;
    let mut current = None;
    if cfg.strict_improvement && placement.len() < cfg.target_size {
        let base = evaluate(grid, topologies, set, cfg, &placement)?;
        audit.push(AuditRow {
            step: 0,
            bus: None,
            runs: base.map_or(0, |b| b.1),
            aborted: base.map_or(0, |b| b.2),
            errors: base.map(|b| b.0),
            chosen: true,
        });
        current = base.map(|b| b.0);
    }

    let mut step = 0;
    while placement.len() < cfg.target_size {
        step += 1;
        let candidates: Vec<usize> = grid
            .buses()
            .iter()
            .map(|b| b.id)
            .filter(|id| !placement.contains(*id))
            .collect();
        let results = map_slice(exec, &candidates, |&bus| {
            let p = placement.with_bus(grid, bus)?;
            evaluate(grid, topologies, set, cfg, &p)
        });
        let mut rows = Vec::with_capacity(candidates.len());
        let mut best: Option<(u64, usize)> = None;
        for (&bus, res) in candidates.iter().zip(results) {
            let res = res?;
            if let Some((errors, _, _)) = res {
                if best.is_none_or(|(e, _)| errors < e) {
                    best = Some((errors, rows.len()));
                }
            }
            rows.push(AuditRow {
                step,
                bus: Some(bus),
                runs: res.map_or(0, |r| r.1),
                aborted: res.map_or(0, |r| r.2),
                errors: res.map(|r| r.0),
                chosen: false,
            });
        }
        let Some((errors, idx)) = best else {
            audit.extend(rows);
            stopped_early = true;
            break;
        };
        if cfg.strict_improvement && current.is_some_and(|c| errors >= c) {
            audit.extend(rows);
            stopped_early = true;
            break;
        }
        rows[idx].chosen = true;
        placement = placement.with_bus(grid, rows[idx].bus.expect("candidate row"))?;
        current = Some(errors);
        audit.extend(rows);
    }
    Ok(PlacementSearch {
        bus_ids: placement.bus_ids().to_vec(),
        audit,
        stopped_early,
    })
}

impl PlacementSearch {
    pub fn placement(&self, grid: &Grid) -> Result<Placement> {
        Placement::from_bus_ids(grid, &self.bus_ids)
    }

    /// `{"bus_ids": [...], "stopped_early": bool}`.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            bus_ids: &'a [usize],
            stopped_early: bool,
        }
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&Out {
            bus_ids: &self.bus_ids,
            stopped_early: self.stopped_early,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn write_audit_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "bus_id", "runs", "aborted", "errors", "chosen"])?;
        for r in &self.audit {
            w.write_record([
                r.step.to_string(),
                r.bus.map_or_else(|| "baseline".into(), |b| b.to_string()),
                r.runs.to_string(),
                r.aborted.to_string(),
                r.errors.map_or_else(|| "unobservable".into(), |e| e.to_string()),
                r.chosen.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Reads a placement file: either `{"bus_ids": [...]}` or a bare JSON array.
pub fn load_placement_file(grid: &Grid, path: impl AsRef<Path>) -> Result<Placement> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum File {
        Object { bus_ids: Vec<usize> },
        Array(Vec<usize>),
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ids = match serde_json::from_str::<File>(&text)? {
        File::Object { bus_ids } | File::Array(bus_ids) => bus_ids,
    };
    Placement::from_bus_ids(grid, &ids)
}
