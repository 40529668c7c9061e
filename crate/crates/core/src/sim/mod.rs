//! Ground-truth simulation: random-walk loads, nonlinear power flow,
//! PMU noise with PT bias, scripted scenarios, Monte Carlo error tallies
//! and report files.

mod engine;
mod load;
mod measurement;
mod montecarlo;
mod report;
mod scenario;

pub use engine::{simulate, simulate_measured, NoiseConfig, Probe, RunPlan, RunRngs, Transition};
pub use load::{load_step, LoadModel};
pub use measurement::{measure, radial_three_sigma, MeasurementModel, PT_BIAS_MAX, THREE_SIGMA_COVERAGE, TVE_BOUND};
pub use montecarlo::{draw_plan, monte_carlo, run_once, MonteCarloConfig};
pub use report::{
    load_report_csv, read_report_csv, save_report_csv, write_report_csv, ErrorReport, ReportRow, Verdict, REPORT_HEADER,
};
pub use scenario::{
    run_scenario, DetectorSpec, NoiseSpec, PlacementSpec, Scenario, ScenarioConfig, ScenarioOutcome, ScheduledToggle,
};

use crate::error::{Error, Result};

/// Simulated window length.
pub const WINDOW_SECONDS: f64 = 1000.0;
/// Peak of the five-house aggregate load the variation statistics refer to.
pub const AGGREGATE_PEAK_KW: f64 = 27.229;

/// Load-increment statistics of the five-house aggregate at one sampling
/// frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadVariation {
    pub freq_hz: f64,
    pub sd_kw: f64,
    /// Rounded percentage as tabulated.
    pub relative_sd_percent: f64,
}

pub const LOAD_VARIATION: [LoadVariation; 3] = [
    LoadVariation {
        freq_hz: 1.0,
        sd_kw: 0.184,
        relative_sd_percent: 0.68,
    },
    LoadVariation {
        freq_hz: 0.2,
        sd_kw: 0.425,
        relative_sd_percent: 1.56,
    },
    LoadVariation {
        freq_hz: 0.1,
        sd_kw: 0.604,
        relative_sd_percent: 2.22,
    },
];

impl LoadVariation {
    pub fn for_frequency(freq_hz: f64) -> Result<Self> {
        LOAD_VARIATION
            .iter()
            .copied()
            .find(|v| (v.freq_hz - freq_hz).abs() < 1e-9)
            .ok_or_else(|| {
                Error::Config(format!(
                    "no load variation tabulated for {freq_hz} Hz (use 1, 0.2 or 0.1)"
                ))
            })
    }

    /// Increment SD as a fraction of peak load.
    pub fn relative_sd(&self) -> f64 {
        self.sd_kw / AGGREGATE_PEAK_KW
    }
}

/// Samples in the simulated window at `freq_hz`.
pub fn samples_for(freq_hz: f64) -> usize {
    (WINDOW_SECONDS * freq_hz).round() as usize
}
