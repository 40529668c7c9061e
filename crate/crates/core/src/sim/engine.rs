use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionEvent, Detector, DetectorConfig, StepTrace, StreamOutput};
use crate::error::{Error, Result};
use crate::grid::{solve_power_flow_from, Grid, SwitchStatus, TopologySet, PF_MAX_ITER, PF_TOL};
use crate::linalg::CVector;
use crate::signature::SignatureLibrary;

use super::load::LoadModel;
use super::measurement::{MeasurementModel, PT_BIAS_MAX, TVE_BOUND};
use super::report::Verdict;
use super::LoadVariation;

/// Noise sources of a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Load increment SD per sample as a fraction of each bus's nominal load.
    pub load_relative_sd: f64,
    /// PMU TVE bound; zero disables PMU noise.
    pub pmu_tve: f64,
    /// PT bias bound as a fraction of `U_N`; zero disables the bias.
    pub pt_bias_max: f64,
    pub clamp_loads: bool,
}

impl NoiseConfig {
    pub fn off() -> Self {
        NoiseConfig {
            load_relative_sd: 0.0,
            pmu_tve: 0.0,
            pt_bias_max: 0.0,
            clamp_loads: false,
        }
    }

    /// PMU noise, PT bias and the load variation tabulated for `freq_hz`.
    pub fn for_frequency(freq_hz: f64) -> Result<Self> {
        Ok(NoiseConfig {
            load_relative_sd: LoadVariation::for_frequency(freq_hz)?.relative_sd(),
            ..Self::measurement_only()
        })
    }

    /// PMU noise and PT bias with static loads.
    pub fn measurement_only() -> Self {
        NoiseConfig {
            load_relative_sd: 0.0,
            pmu_tve: TVE_BOUND,
            pt_bias_max: PT_BIAS_MAX,
            clamp_loads: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("load_relative_sd", self.load_relative_sd),
            ("pmu_tve", self.pmu_tve),
            ("pt_bias_max", self.pt_bias_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number")));
            }
        }
        Ok(())
    }
}

/// A scheduled breaker toggle taking effect at `sample`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub sample: usize,
    /// Zero-based breaker index.
    pub breaker: usize,
}

/// Ground truth of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPlan {
    pub sigma0: SwitchStatus,
    pub transitions: Vec<Transition>,
    pub samples: usize,
}

impl RunPlan {
    /// Checks ordering, spacing, breaker range and admissibility of every
    /// status the plan visits.
    pub fn validate(&self, grid: &Grid, min_gap: usize) -> Result<()> {
        grid.check_admissible(&self.sigma0)?;
        let mut sigma = self.sigma0;
        let mut last: Option<usize> = None;
        for tr in &self.transitions {
            if tr.breaker >= grid.num_switches() {
                return Err(Error::Config(format!("breaker S{} does not exist", tr.breaker + 1)));
            }
            if tr.sample == 0 || tr.sample >= self.samples {
                return Err(Error::Config(format!(
                    "transition sample {} outside 1..{}",
                    tr.sample, self.samples
                )));
            }
            if let Some(prev) = last {
                if tr.sample < prev + min_gap.max(1) {
                    return Err(Error::Config(format!(
                        "transitions at samples {prev} and {} are closer than {}",
                        tr.sample,
                        min_gap.max(1)
                    )));
                }
            }
            last = Some(tr.sample);
            sigma = sigma.toggled(tr.breaker);
            grid.check_admissible(&sigma)?;
        }
        Ok(())
    }

    /// True status at every sample.
    pub fn timeline(&self) -> Vec<SwitchStatus> {
        let mut out = Vec::with_capacity(self.samples);
        let mut sigma = self.sigma0;
        let mut next = self.transitions.iter().peekable();
        for t in 0..self.samples {
            while let Some(tr) = next.next_if(|tr| tr.sample == t) {
                sigma = sigma.toggled(tr.breaker);
            }
            out.push(sigma);
        }
        out
    }

    /// Classifies the detector's events against the plan. An event is
    /// timely when a transition happened within `[sample - window, sample]`.
    pub fn verdict(&self, events: &[DetectionEvent], window: usize) -> Verdict {
        let truth = self.timeline();
        let mut v = Verdict::default();
        for tr in &self.transitions {
            if !events
                .iter()
                .any(|e| e.sample >= tr.sample && e.sample <= tr.sample + window)
            {
                v.non_detections += 1;
            }
        }
        for e in events {
            let timely = self
                .transitions
                .iter()
                .any(|tr| tr.sample <= e.sample && e.sample <= tr.sample + window);
            let wrong_status = truth.get(e.sample).is_some_and(|s| *s != e.after);
            if !timely {
                v.wrong_detections += 1;
            }
            if !timely || wrong_status {
                v.decision_errors += 1;
            }
        }
        v
    }
}

/// Independent random streams of one run, derived from a base seed and
/// the run index.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub plan: ChaCha8Rng,
    pub load: ChaCha8Rng,
    pub pmu: ChaCha8Rng,
    pub bias: ChaCha8Rng,
}

impl RunRngs {
    pub fn new(seed: u64, run: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(run * 4 + k);
            r
        };
        RunRngs {
            plan: stream(0),
            load: stream(1),
            pmu: stream(2),
            bias: stream(3),
        }
    }
}

/// A detector attached to a run.
#[derive(Debug, Clone, Copy)]
pub struct Probe<'a> {
    pub library: &'a SignatureLibrary,
    pub config: DetectorConfig,
}

/// Simulates `plan` with nonlinear power flow and feeds every probe from
/// the same measured voltages (each probe sees its own bus subset).
pub fn simulate(
    grid: &Grid,
    topologies: &TopologySet,
    plan: &RunPlan,
    noise: &NoiseConfig,
    rngs: &mut RunRngs,
    probes: &[Probe<'_>],
    keep_trace: bool,
) -> Result<Vec<StreamOutput>> {
    simulate_into(grid, topologies, plan, noise, rngs, probes, keep_trace, None)
}

/// Like [`simulate`], also returning the measured voltages of every bus
/// at every sample.
pub fn simulate_measured(
    grid: &Grid,
    topologies: &TopologySet,
    plan: &RunPlan,
    noise: &NoiseConfig,
    rngs: &mut RunRngs,
    probes: &[Probe<'_>],
) -> Result<(Vec<StreamOutput>, Vec<Vec<Complex64>>)> {
    let mut measured = Vec::with_capacity(plan.samples);
    let out = simulate_into(grid, topologies, plan, noise, rngs, probes, true, Some(&mut measured))?;
    Ok((out, measured))
}

#[allow(clippy::too_many_arguments)]
fn simulate_into(
    grid: &Grid,
    topologies: &TopologySet,
    plan: &RunPlan,
    noise: &NoiseConfig,
    rngs: &mut RunRngs,
    probes: &[Probe<'_>],
    keep_trace: bool,
    mut measured: Option<&mut Vec<Vec<Complex64>>>,
) -> Result<Vec<StreamOutput>> {
    noise.validate()?;
    let n = grid.num_buses();
    let u_n = grid.u_n();
    let mut loads = LoadModel::nominal(grid, noise.load_relative_sd).with_clamp(noise.clamp_loads);
    let meter = MeasurementModel::draw(n, noise.pmu_tve, noise.pt_bias_max, u_n, &mut rngs.bias);
    let mut detectors = probes
        .iter()
        .map(|p| Detector::new(p.library, p.config, plan.sigma0))
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = vec![StreamOutput::default(); probes.len()];

    let truth = plan.timeline();
    let mut u = CVector::from_element(n, Complex64::new(u_n, 0.0));
    // Unchanged inputs reuse the previous solution so static stretches give
    // bit-identical voltages (a warm restart would jitter at the tolerance).
    let mut solved: Option<(SwitchStatus, CVector)> = None;
    for (t, sigma) in truth.iter().enumerate() {
        if t > 0 {
            loads.step(&mut rngs.load);
        }
        let s = loads.injection();
        if solved
            .as_ref()
            .is_none_or(|(prev, prev_s)| prev != sigma || *prev_s != s)
        {
            let x = topologies.get(sigma).ok_or_else(|| Error::Disconnected {
                status: sigma.to_string(),
            })?;
            u = solve_power_flow_from(x, &s, u_n, u, PF_TOL, PF_MAX_ITER)?;
            solved = Some((*sigma, s));
        }
        let y = meter.measure_all(&u, &mut rngs.pmu);
        for ((det, probe), out) in detectors.iter_mut().zip(probes).zip(outputs.iter_mut()) {
            let (ev, tr): (_, StepTrace) = det.step(&probe.library.placement().select(&y))?;
            if let Some(ev) = ev {
                out.events.push(ev);
            }
            if keep_trace {
                out.trace.push(tr);
            }
        }
        if let Some(m) = measured.as_deref_mut() {
            m.push(y);
        }
    }
    Ok(outputs)
}
