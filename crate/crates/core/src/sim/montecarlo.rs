use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, TopologySet};
use crate::parallel::{map_range, Execution};

use super::engine::{simulate, NoiseConfig, Probe, RunPlan, RunRngs, Transition};
use super::report::{ErrorReport, Verdict};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub noise: NoiseConfig,
    /// Samples per run.
    pub samples: usize,
    pub runs: usize,
    pub seed: u64,
    /// Transitions are drawn in `[lag, samples - lag]` so every detector
    /// has a full history before and `lag` samples after them.
    pub lag: usize,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.lag == 0 {
            return Err(Error::Config("lag must be at least 1".into()));
        }
        if self.samples < 2 * self.lag + 1 {
            return Err(Error::Config(format!(
                "{} samples leave no room for a transition with lag {}",
                self.samples, self.lag
            )));
        }
        Ok(())
    }
}

/// Random single-transition plan: status uniform over admissible statuses,
/// breaker uniform over toggles that stay admissible, transition sample
/// uniform in `[lag, samples - lag]`.
pub fn draw_plan<R: Rng + ?Sized>(topologies: &TopologySet, cfg: &MonteCarloConfig, rng: &mut R) -> RunPlan {
    let statuses = topologies.statuses();
    loop {
        let sigma0 = statuses[rng.random_range(0..statuses.len())];
        let toggles: Vec<usize> = (0..sigma0.len())
            .filter(|&l| topologies.contains(&sigma0.toggled(l)))
            .collect();
        if toggles.is_empty() {
            continue;
        }
        let breaker = toggles[rng.random_range(0..toggles.len())];
        let lag = cfg.lag;
        let sample = rng.random_range(lag..=cfg.samples - lag);
        return RunPlan {
            sigma0,
            transitions: vec![Transition { sample, breaker }],
            samples: cfg.samples,
        };
    }
}

/// Outcome of one run for every probe; `None` when the run was aborted.
pub fn run_once(
    grid: &Grid,
    topologies: &TopologySet,
    probes: &[Probe<'_>],
    cfg: &MonteCarloConfig,
    run: u64,
) -> Result<Option<Vec<Verdict>>> {
    let mut rngs = RunRngs::new(cfg.seed, run);
    let plan = draw_plan(topologies, cfg, &mut rngs.plan);
    match simulate(grid, topologies, &plan, &cfg.noise, &mut rngs, probes, false) {
        Ok(out) => Ok(Some(
            out.iter()
                .zip(probes)
                .map(|(o, p)| plan.verdict(&o.events, p.config.tau))
                .collect(),
        )),
        Err(Error::NonConvergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs `cfg.runs` independent scenarios and scores every probe on the
/// same simulated voltages. Reports come back in probe order and do not
/// depend on `exec`.
pub fn monte_carlo(
    grid: &Grid,
    topologies: &TopologySet,
    probes: &[Probe<'_>],
    cfg: &MonteCarloConfig,
    exec: Execution,
) -> Result<Vec<ErrorReport>> {
    cfg.validate()?;
    if probes.is_empty() {
        return Err(Error::Config("no detector to evaluate".into()));
    }
    for p in probes {
        p.config.validate()?;
        if p.library.num_switches() != grid.num_switches() {
            return Err(Error::LibraryMismatch("switch count differs from the grid".into()));
        }
        if p.config.tau > cfg.lag {
            return Err(Error::Config(format!(
                "detector tau {} exceeds the run lag {}",
                p.config.tau, cfg.lag
            )));
        }
    }
    let per_run = map_range(exec, cfg.runs, |r| run_once(grid, topologies, probes, cfg, r as u64));
    let mut reports = vec![ErrorReport::default(); probes.len()];
    for outcome in per_run {
        match outcome? {
            Some(verdicts) => {
                for (rep, v) in reports.iter_mut().zip(verdicts) {
                    rep.add_run(v);
                }
            }
            None => reports.iter_mut().for_each(ErrorReport::add_aborted),
        }
    }
    Ok(reports)
}
