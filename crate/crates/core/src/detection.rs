//! Online switching-action detectors.
//!
//! Both detectors keep the current status estimate, build a trend vector
//! from the incoming measurement and a past one, and project it onto the
//! particular library of the current status.
//!
//! * [`Mode::Ideal`] uses consecutive samples and accepts the best
//!   candidate as soon as its score reaches `min_proj`.
//! * [`Mode::Noisy`] uses samples `tau` apart, discards trend vectors
//!   shorter than `min_norm`, and commits a candidate only after it has
//!   been the above-threshold maximizer for `tau` consecutive samples.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SwitchStatus;
use crate::linalg;
use crate::signature::{particular_library, Candidate, SignatureLibrary};

/// Projection threshold of the ideal detector.
pub const IDEAL_MIN_PROJ: f64 = 0.98;
/// Projection threshold of the noisy detector.
pub const NOISY_MIN_PROJ: f64 = 0.90;
/// Default trend-norm gate of the noisy detector per measured bus, p.u.
/// The absolute gate is this times `sqrt(p)` for `p` PMUs, since both
/// noise and switching trend norms grow with the square root of the
/// number of measured buses.
pub const MIN_NORM_PER_SENSOR: f64 = 0.0018;
pub const DEFAULT_TAU: usize = 5;
/// Relative numerical zero for ideal-mode trend vectors (times `U_N`).
pub const IDEAL_ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ideal,
    Noisy,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "noisy" => Ok(Mode::Noisy),
            other => Err(Error::Config(format!("unknown detector mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub mode: Mode,
    /// Lag between the two samples of a trend vector (noisy mode) and the
    /// confirmation cluster length.
    pub tau: usize,
    pub min_proj: f64,
    /// Per-unit. Noisy mode only.
    pub min_norm: f64,
    /// Nominal voltage used to scale the ideal-mode numerical zero.
    pub u_n: f64,
}

/// `MIN_NORM_PER_SENSOR * sqrt(sensors)`.
pub fn default_min_norm(sensors: usize) -> f64 {
    MIN_NORM_PER_SENSOR * (sensors as f64).sqrt()
}

impl DetectorConfig {
    pub fn ideal() -> Self {
        DetectorConfig {
            mode: Mode::Ideal,
            tau: 1,
            min_proj: IDEAL_MIN_PROJ,
            min_norm: 0.0,
            u_n: 1.0,
        }
    }

    /// Noisy-mode defaults with `min_norm` given directly in per-unit.
    pub fn noisy(min_norm: f64) -> Self {
        DetectorConfig {
            mode: Mode::Noisy,
            tau: DEFAULT_TAU,
            min_proj: NOISY_MIN_PROJ,
            min_norm,
            u_n: 1.0,
        }
    }

    /// Noisy-mode defaults for a placement of `sensors` PMUs.
    pub fn noisy_for_sensors(sensors: usize) -> Self {
        Self::noisy(default_min_norm(sensors))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_proj > 0.0 && self.min_proj <= 1.0) {
            return Err(Error::Config(format!("min_proj {} outside (0, 1]", self.min_proj)));
        }
        if !(self.min_norm >= 0.0) {
            return Err(Error::Config("min_norm must be non-negative".into()));
        }
        if !(self.u_n > 0.0) {
            return Err(Error::Config("u_n must be positive".into()));
        }
        match self.mode {
            Mode::Noisy if self.tau < 2 => Err(Error::Config("noisy mode needs tau >= 2".into())),
            Mode::Ideal if self.tau != 1 => Err(Error::Config("ideal mode uses tau = 1".into())),
            _ => Ok(()),
        }
    }

    /// Samples of history the detector needs besides the current one.
    fn lag(&self) -> usize {
        match self.mode {
            Mode::Ideal => 1,
            Mode::Noisy => self.tau,
        }
    }
}

/// `y(t1) - y(t2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendVector {
    pub delta: Vec<Complex64>,
    pub t1: usize,
    pub t2: usize,
}

impl TrendVector {
    pub fn lag(&self) -> usize {
        self.t1 - self.t2
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.delta)
    }
}

pub fn trend_vector(y1: &[Complex64], y2: &[Complex64]) -> Result<Vec<Complex64>> {
    if y1.len() != y2.len() {
        return Err(Error::DimensionMismatch {
            expected: y1.len(),
            got: y2.len(),
        });
    }
    Ok(y1.iter().zip(y2).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionScores {
    /// `(breaker, score)` per candidate, in breaker order.
    pub scores: Vec<(usize, f64)>,
    pub best_breaker: usize,
    pub best_score: f64,
    pub after: SwitchStatus,
}

/// `c_l = |<delta / |delta|, g_l>|` for each candidate. Ties go to the
/// lowest breaker index.
pub fn project(delta: &[Complex64], candidates: &[Candidate<'_>]) -> Result<Option<ProjectionScores>> {
    let n = linalg::norm(delta);
    if !(n > 0.0) {
        return Err(Error::ZeroTrend);
    }
    let mut best: Option<(usize, f64, SwitchStatus)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if cand.signature.len() != delta.len() {
            return Err(Error::DimensionMismatch {
                expected: cand.signature.len(),
                got: delta.len(),
            });
        }
        let c = linalg::inner(delta, cand.signature).norm() / n;
        scores.push((cand.breaker, c));
        let better = match best {
            None => true,
            Some((b, s, _)) => c > s || (c == s && cand.breaker < b),
        };
        if better {
            best = Some((cand.breaker, c, cand.after));
        }
    }
    Ok(best.map(|(best_breaker, best_score, after)| ProjectionScores {
        scores,
        best_breaker,
        best_score,
        after,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// Sample at which the status estimate changed.
    pub sample: usize,
    /// Zero-based breaker index.
    pub breaker: usize,
    pub before: SwitchStatus,
    pub after: SwitchStatus,
    /// Largest score seen in the confirming cluster.
    pub score: f64,
    /// First sample of the confirming cluster (equals `sample` in ideal mode).
    pub cluster_start: usize,
}

/// Per-sample diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepTrace {
    pub sample: usize,
    /// Trend vector norm, `NaN` during warm-up.
    pub norm: f64,
    /// Best projection score after gating (0 when gated or warming up).
    pub max_score: f64,
    /// Maximizing breaker when a projection was made.
    pub best_breaker: Option<usize>,
}

/// Snapshot-able detector state.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub sigma: SwitchStatus,
    history: VecDeque<Vec<Complex64>>,
    pub candidate: Option<usize>,
    pub cluster_length: usize,
    cluster_start: usize,
    cluster_peak: f64,
    cluster_after: Option<SwitchStatus>,
    pub sample: usize,
    pub events: Vec<DetectionEvent>,
}

impl DetectorState {
    pub fn new(sigma0: SwitchStatus) -> Self {
        DetectorState {
            sigma: sigma0,
            history: VecDeque::new(),
            candidate: None,
            cluster_length: 0,
            cluster_start: 0,
            cluster_peak: 0.0,
            cluster_after: None,
            sample: 0,
            events: Vec::new(),
        }
    }

    fn reset_cluster(&mut self) {
        self.candidate = None;
        self.cluster_length = 0;
        self.cluster_peak = 0.0;
        self.cluster_after = None;
    }
}

/// A detector bound to a signature library.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    library: &'a SignatureLibrary,
    config: DetectorConfig,
    state: DetectorState,
    candidates: Vec<Candidate<'a>>,
}

impl<'a> Detector<'a> {
    pub fn new(library: &'a SignatureLibrary, config: DetectorConfig, sigma0: SwitchStatus) -> Result<Self> {
        config.validate()?;
        if sigma0.len() != library.num_switches() {
            return Err(Error::StatusLength {
                expected: library.num_switches(),
                got: sigma0.len(),
            });
        }
        Ok(Detector {
            library,
            config,
            state: DetectorState::new(sigma0),
            candidates: particular_library(library, &sigma0),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn status(&self) -> SwitchStatus {
        self.state.sigma
    }

    pub fn events(&self) -> &[DetectionEvent] {
        &self.state.events
    }

    /// Restores a snapshot taken with [`state`](Self::state).
    pub fn restore(&mut self, state: DetectorState) {
        self.candidates = particular_library(self.library, &state.sigma);
        self.state = state;
    }

    /// Feeds one measurement vector (aligned with the library placement).
    pub fn step(&mut self, y: &[Complex64]) -> Result<(Option<DetectionEvent>, StepTrace)> {
        if y.len() != self.library.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.library.dimension(),
                got: y.len(),
            });
        }
        let t = self.state.sample;
        self.state.sample += 1;
        let lag = self.config.lag();
        let mut trace = StepTrace {
            sample: t,
            norm: f64::NAN,
            max_score: 0.0,
            best_breaker: None,
        };

        let past = if self.state.history.len() == lag {
            self.state.history.pop_front()
        } else {
            None
        };
        self.state.history.push_back(y.to_vec());
        let Some(past) = past else {
            return Ok((None, trace));
        };
        let delta = trend_vector(y, &past)?;
        let norm = linalg::norm(&delta);
        trace.norm = norm;

        let event = match self.config.mode {
            Mode::Ideal => self.ideal_decision(t, &delta, norm, &mut trace)?,
            Mode::Noisy => self.noisy_decision(t, &delta, norm, &mut trace)?,
        };
        if let Some(ev) = &event {
            self.state.events.push(ev.clone());
        }
        Ok((event, trace))
    }

    fn ideal_decision(
        &mut self,
        t: usize,
        delta: &[Complex64],
        norm: f64,
        trace: &mut StepTrace,
    ) -> Result<Option<DetectionEvent>> {
        if norm <= IDEAL_ZERO_NORM * self.config.u_n {
            return Ok(None);
        }
        let Some(p) = project(delta, &self.candidates)? else {
            return Ok(None);
        };
        trace.max_score = p.best_score;
        trace.best_breaker = Some(p.best_breaker);
        if p.best_score >= self.config.min_proj {
            Ok(Some(self.commit(t, p.best_breaker, p.after, p.best_score, t)))
        } else {
            Ok(None)
        }
    }

    fn noisy_decision(
        &mut self,
        t: usize,
        delta: &[Complex64],
        norm: f64,
        trace: &mut StepTrace,
    ) -> Result<Option<DetectionEvent>> {
        if norm < self.config.min_norm || norm == 0.0 {
            self.state.reset_cluster();
            return Ok(None);
        }
        let Some(p) = project(delta, &self.candidates)? else {
            self.state.reset_cluster();
            return Ok(None);
        };
        trace.max_score = p.best_score;
        trace.best_breaker = Some(p.best_breaker);
        if p.best_score <= self.config.min_proj {
            // Below threshold: the running cluster is left as is.
            return Ok(None);
        }
        let st = &mut self.state;
        if st.candidate == Some(p.best_breaker) {
            st.cluster_length += 1;
            st.cluster_peak = st.cluster_peak.max(p.best_score);
        } else {
            st.candidate = Some(p.best_breaker);
            st.cluster_length = 1;
            st.cluster_start = t;
            st.cluster_peak = p.best_score;
            st.cluster_after = Some(p.after);
        }
        if st.cluster_length >= self.config.tau {
            let (start, peak) = (st.cluster_start, st.cluster_peak);
            let after = st.cluster_after.expect("cluster has a target");
            let ev = self.commit(t, p.best_breaker, after, peak, start);
            self.state.reset_cluster();
            return Ok(Some(ev));
        }
        Ok(None)
    }

    fn commit(&mut self, t: usize, breaker: usize, after: SwitchStatus, score: f64, start: usize) -> DetectionEvent {
        let before = self.state.sigma;
        self.state.sigma = after;
        self.candidates = particular_library(self.library, &after);
        DetectionEvent {
            sample: t,
            breaker,
            before,
            after,
            score,
            cluster_start: start,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StreamOutput {
    pub events: Vec<DetectionEvent>,
    pub trace: Vec<StepTrace>,
}

/// Drives a detector over a measurement stream.
pub fn run_stream<I, V>(
    library: &SignatureLibrary,
    config: DetectorConfig,
    sigma0: SwitchStatus,
    stream: I,
) -> Result<StreamOutput>
where
    I: IntoIterator<Item = V>,
    V: AsRef<[Complex64]>,
{
    let mut det = Detector::new(library, config, sigma0)?;
    let mut out = StreamOutput::default();
    for y in stream {
        let (ev, tr) = det.step(y.as_ref())?;
        out.trace.push(tr);
        if let Some(ev) = ev {
            out.events.push(ev);
        }
    }
    Ok(out)
}

/// A maximal run of consecutive samples whose score exceeds a threshold
/// with the same maximizing breaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreCluster {
    pub start: usize,
    pub len: usize,
    pub breaker: usize,
}

pub fn score_clusters(trace: &[StepTrace], min_proj: f64) -> Vec<ScoreCluster> {
    let mut out: Vec<ScoreCluster> = Vec::new();
    let mut extending = false;
    for tr in trace {
        let hit = match tr.best_breaker {
            Some(b) if tr.max_score > min_proj => Some(b),
            _ => None,
        };
        if let Some(b) = hit {
            match out.last_mut() {
                Some(c) if extending && c.breaker == b && tr.sample == c.start + c.len => c.len += 1,
                _ => out.push(ScoreCluster {
                    start: tr.sample,
                    len: 1,
                    breaker: b,
                }),
            }
        }
        extending = hit.is_some();
    }
    out
}
