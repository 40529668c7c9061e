use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionEvent, DetectorConfig, Mode, StepTrace};
use crate::error::{Error, Result};
use crate::grid::{Grid, SwitchStatus, TopologySet};
use crate::signature::{Placement, SignatureLibrary};

use super::engine::{simulate_measured, NoiseConfig, Probe, RunPlan, RunRngs, Transition};
use super::measurement::{PT_BIAS_MAX, TVE_BOUND};
use super::report::Verdict;
use super::{samples_for, LoadVariation};

/// Either a preset name (`P33`, `P15`, `P7`) or explicit bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlacementSpec {
    Preset(String),
    Buses(Vec<usize>),
}

impl PlacementSpec {
    pub fn resolve(&self, grid: &Grid) -> Result<Placement> {
        match self {
            PlacementSpec::Preset(name) => Placement::preset(grid, name),
            PlacementSpec::Buses(ids) => Placement::from_bus_ids(grid, ids),
        }
    }
}

/// A scheduled toggle as written in scenario files (breaker ids 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledToggle {
    pub sample: usize,
    pub breaker: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    pub mode: Option<Mode>,
    pub tau: Option<usize>,
    pub min_proj: Option<f64>,
    /// Per-unit.
    pub min_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub pmu: bool,
    pub pt_bias: bool,
    pub loads: bool,
    /// Overrides the load SD tabulated for the sampling frequency.
    pub load_relative_sd: Option<f64>,
    pub clamp_loads: bool,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            pmu: true,
            pt_bias: true,
            loads: true,
            load_relative_sd: None,
            clamp_loads: false,
        }
    }
}

/// Scenario file contents. See `docs/scenario.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Network file; the built-in IEEE 33-bus feeder when absent. Relative
    /// paths are taken from the scenario file's directory.
    #[serde(default)]
    pub network: Option<PathBuf>,
    pub placement: PlacementSpec,
    pub freq_hz: f64,
    /// Defaults to a 1000 s window at `freq_hz`.
    #[serde(default)]
    pub duration_samples: Option<usize>,
    pub sigma0: String,
    #[serde(default)]
    pub transitions: Vec<ScheduledToggle>,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub placement: Placement,
    pub freq_hz: f64,
    pub plan: RunPlan,
    pub detector: DetectorConfig,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self, grid: &Grid) -> Result<Scenario> {
        if !(self.freq_hz > 0.0 && self.freq_hz.is_finite()) {
            return Err(Error::Config("freq_hz must be positive".into()));
        }
        let placement = self.placement.resolve(grid)?;
        let sigma0: SwitchStatus = self.sigma0.parse()?;
        if sigma0.len() != grid.num_switches() {
            return Err(Error::StatusLength {
                expected: grid.num_switches(),
                got: sigma0.len(),
            });
        }

        let d = &self.detector;
        let mode = d.mode.unwrap_or(Mode::Noisy);
        let mut detector = match mode {
            Mode::Ideal => DetectorConfig::ideal(),
            Mode::Noisy => DetectorConfig::noisy_for_sensors(placement.len()),
        };
        detector.u_n = grid.u_n();
        if let Some(tau) = d.tau {
            detector.tau = tau;
        }
        if let Some(p) = d.min_proj {
            detector.min_proj = p;
        }
        if let Some(n) = d.min_norm {
            detector.min_norm = n;
        }
        detector.validate()?;

        let n = &self.noise;
        let load_relative_sd = match (n.loads, n.load_relative_sd) {
            (false, _) => 0.0,
            (true, Some(sd)) => sd,
            (true, None) => LoadVariation::for_frequency(self.freq_hz)?.relative_sd(),
        };
        let noise = NoiseConfig {
            load_relative_sd,
            pmu_tve: if n.pmu { TVE_BOUND } else { 0.0 },
            pt_bias_max: if n.pt_bias { PT_BIAS_MAX } else { 0.0 },
            clamp_loads: n.clamp_loads,
        };
        noise.validate()?;

        let samples = self.duration_samples.unwrap_or_else(|| samples_for(self.freq_hz));
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for t in &self.transitions {
            if t.breaker == 0 || t.breaker > grid.num_switches() {
                return Err(Error::Config(format!("breaker S{} does not exist", t.breaker)));
            }
            transitions.push(Transition {
                sample: t.sample,
                breaker: t.breaker - 1,
            });
        }
        let plan = RunPlan {
            sigma0,
            transitions,
            samples,
        };
        plan.validate(grid, detector.tau)?;
        Ok(Scenario {
            placement,
            freq_hz: self.freq_hz,
            plan,
            detector,
            noise,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub events: Vec<DetectionEvent>,
    pub trace: Vec<StepTrace>,
    pub truth: Vec<SwitchStatus>,
    /// Status estimate after each sample.
    pub estimate: Vec<SwitchStatus>,
    pub verdict: Verdict,
    /// Measured voltages of every bus at every sample.
    pub measured: Vec<Vec<Complex64>>,
}

/// Simulates one scripted scenario (run index 0 of its seed).
pub fn run_scenario(
    grid: &Grid,
    topologies: &TopologySet,
    library: &SignatureLibrary,
    scenario: &Scenario,
) -> Result<ScenarioOutcome> {
    library.validate_for(grid, &scenario.placement)?;
    let mut rngs = RunRngs::new(scenario.seed, 0);
    let probe = Probe {
        library,
        config: scenario.detector,
    };
    let (mut outs, measured) =
        simulate_measured(grid, topologies, &scenario.plan, &scenario.noise, &mut rngs, &[probe])?;
    let mut out = outs.pop().expect("one probe");

    let mut estimate = Vec::with_capacity(out.trace.len());
    let mut sigma = scenario.plan.sigma0;
    let mut events = out.events.iter().peekable();
    for tr in &out.trace {
        while let Some(e) = events.next_if(|e| e.sample == tr.sample) {
            sigma = e.after;
        }
        estimate.push(sigma);
    }
    let verdict = scenario.plan.verdict(&out.events, scenario.detector.tau);
    Ok(ScenarioOutcome {
        events: std::mem::take(&mut out.events),
        trace: out.trace,
        truth: scenario.plan.timeline(),
        estimate,
        verdict,
        measured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ieee33;
    use crate::signature::SignatureSet;
    use crate::Execution;

    const SCRIPT: &str = r#"{
        "placement": "P33",
        "freq_hz": 0.1,
        "sigma0": "11101",
        "transitions": [{"sample": 48, "breaker": 3}],
        "noise": {"pmu": false, "pt_bias": false, "loads": false},
        "seed": 3
    }"#;

    #[test]
    fn parse_and_resolve_defaults() {
        let g = ieee33();
        let sc = ScenarioConfig::from_json(SCRIPT).unwrap().resolve(&g).unwrap();
        assert_eq!(sc.plan.samples, 100);
        assert_eq!(sc.plan.transitions, vec![Transition { sample: 48, breaker: 2 }]);
        assert_eq!(sc.detector.mode, Mode::Noisy);
        assert_eq!(sc.detector.tau, 5);
        assert!((sc.detector.min_norm - 0.0018 * 33f64.sqrt()).abs() < 1e-15);
        assert_eq!(sc.noise, NoiseConfig::off());
    }

    #[test]
    fn unknown_fields_and_bad_breakers_are_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"placement":"P7","freq_hz":1,"sigma0":"11101","bogus":1}"#).is_err());
        let g = ieee33();
        let bad = r#"{"placement":"P7","freq_hz":1,"sigma0":"11101","transitions":[{"sample":10,"breaker":6}]}"#;
        assert!(ScenarioConfig::from_json(bad).unwrap().resolve(&g).is_err());
        let explicit = r#"{"placement":[9,12,15],"freq_hz":1,"sigma0":"1,1,1,0,1"}"#;
        let sc = ScenarioConfig::from_json(explicit).unwrap().resolve(&g).unwrap();
        assert_eq!(sc.placement.bus_ids(), &[9, 12, 15]);
    }

    #[test]
    fn noiseless_script_detects_s3() {
        let g = ieee33();
        let topo = TopologySet::build(&g, Execution::default()).unwrap();
        let sc = ScenarioConfig::from_json(SCRIPT).unwrap().resolve(&g).unwrap();
        let lib = SignatureSet::from_topologies(&g, &topo, Execution::default())
            .unwrap()
            .restrict(&sc.placement)
            .unwrap();
        let out = run_scenario(&g, &topo, &lib, &sc).unwrap();
        assert_eq!(out.verdict, Verdict::default());
        assert_eq!(out.events.len(), 1);
        assert_eq!((out.events[0].sample, out.events[0].breaker), (52, 2));
        assert_eq!(out.trace.len(), 100);
        assert_eq!(out.estimate[99], out.truth[99]);
    }
}
