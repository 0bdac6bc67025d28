//! Discrete-time roundabout simulation.
//!
//! Each time unit: Poisson arrivals join detector-capped entrance queues,
//! green lanes discharge at a fixed saturation headway, and the controller
//! is consulted whenever the running green (or all-red) interval expires.
//!
//! Arrivals are drawn from a single ChaCha8 stream seeded with the
//! scenario's 64-bit seed, flows in rate-table column order, so two runs
//! with the same seed see identical arrivals whatever the controller does.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::controllers::Controller;
use crate::phases::{FlowId, PhaseId, SignalCommand, Subset, FLOWS, FLOW_COUNT};

pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_TIME_UNIT_SECONDS: f64 = 0.5;
pub const DEFAULT_DETECTOR_CAP: usize = 20;
pub const DEFAULT_DISCHARGE_HEADWAY: u32 = 1;
pub const DEFAULT_TRACE_INTERVAL: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
}

/// Per-flow piecewise-linear arrival rates, `(t, λ)` waypoints with `t` in
/// time units and `λ` in vehicles per time unit.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    flows: [Vec<(f64, f64)>; FLOW_COUNT],
}

impl RateSchedule {
    pub fn new(flows: [Vec<(f64, f64)>; FLOW_COUNT]) -> Result<Self, ConfigError> {
        for (f, waypoints) in FLOWS.iter().zip(&flows) {
            if waypoints.is_empty() {
                return Err(ConfigError::Scenario(format!("flow {f} has no waypoints")));
            }
            for &(t, rate) in waypoints {
                if !(t.is_finite() && rate.is_finite() && rate >= 0.0) {
                    return Err(ConfigError::Scenario(format!(
                        "flow {f}: bad waypoint ({t}, {rate})"
                    )));
                }
            }
            if waypoints.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(ConfigError::Scenario(format!(
                    "flow {f}: waypoint times must increase strictly"
                )));
            }
        }
        Ok(Self { flows })
    }

    /// Same constant rate on every flow.
    pub fn uniform(rate: f64) -> Self {
        Self::steady([rate; FLOW_COUNT])
    }

    pub fn steady(rates: [f64; FLOW_COUNT]) -> Self {
        Self::new(rates.map(|r| vec![(0.0, r)])).expect("steady rates are valid")
    }

    pub fn waypoints(&self, flow: FlowId) -> &[(f64, f64)] {
        &self.flows[flow.index()]
    }

    pub fn is_steady(&self) -> bool {
        self.flows.iter().all(|w| w.len() == 1)
    }

    /// Linear interpolation between waypoints, constant outside their span.
    pub fn rate_at(&self, flow: FlowId, t: f64) -> f64 {
        let w = &self.flows[flow.index()];
        let (first, last) = (w[0], w[w.len() - 1]);
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        let i = w.partition_point(|p| p.0 <= t);
        let ((t0, r0), (t1, r1)) = (w[i - 1], w[i]);
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }

    fn scale_time(&mut self, factor: f64) {
        for w in &mut self.flows {
            for p in w.iter_mut() {
                p.0 *= factor;
            }
        }
    }
}

pub fn rate_at(schedule: &RateSchedule, flow: FlowId, t: f64) -> f64 {
    schedule.rate_at(flow, t)
}

impl Serialize for RateSchedule {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, &Vec<(f64, f64)>> = FLOWS
            .iter()
            .map(|f| (f.to_string(), &self.flows[f.index()]))
            .collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RateSchedule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut map: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::deserialize(d)?;
        let mut flows: [Vec<(f64, f64)>; FLOW_COUNT] = Default::default();
        for f in FLOWS {
            flows[f.index()] = map
                .remove(&f.to_string())
                .ok_or_else(|| D::Error::custom(format!("missing flow {f}")))?;
        }
        if let Some(k) = map.keys().next() {
            return Err(D::Error::custom(format!("unknown flow {k}")));
        }
        RateSchedule::new(flows).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_time_unit")]
    pub time_unit_seconds: f64,
    #[serde(default = "default_cap")]
    pub detector_cap: usize,
    #[serde(default = "default_headway")]
    pub discharge_headway: u32,
    #[serde(default = "default_trace_interval")]
    pub trace_interval: u64,
    pub rate_schedule: RateSchedule,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}
fn default_time_unit() -> f64 {
    DEFAULT_TIME_UNIT_SECONDS
}
fn default_cap() -> usize {
    DEFAULT_DETECTOR_CAP
}
fn default_headway() -> u32 {
    DEFAULT_DISCHARGE_HEADWAY
}
fn default_trace_interval() -> u64 {
    DEFAULT_TRACE_INTERVAL
}

impl Scenario {
    pub fn new(name: &str, rate_schedule: RateSchedule) -> Self {
        Self {
            name: name.to_string(),
            horizon: DEFAULT_HORIZON,
            time_unit_seconds: DEFAULT_TIME_UNIT_SECONDS,
            detector_cap: DEFAULT_DETECTOR_CAP,
            discharge_headway: DEFAULT_DISCHARGE_HEADWAY,
            trace_interval: DEFAULT_TRACE_INTERVAL,
            rate_schedule,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Scenario(format!("{}: {m}", self.name)));
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if !(self.time_unit_seconds > 0.0 && self.time_unit_seconds.is_finite()) {
            return bad("time_unit_seconds must be positive");
        }
        if self.detector_cap == 0 {
            return bad("detector_cap must be positive");
        }
        if self.discharge_headway == 0 {
            return bad("discharge_headway must be positive");
        }
        if self.trace_interval == 0 {
            return bad("trace_interval must be positive");
        }
        Ok(())
    }

    /// Changes the horizon, stretching waypoint times proportionally so a
    /// time-varying ramp still spans the whole run.
    pub fn with_horizon(mut self, horizon: u64) -> Self {
        if horizon != self.horizon && self.horizon > 0 {
            self.rate_schedule
                .scale_time(horizon as f64 / self.horizon as f64);
        }
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| ConfigError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

const CONDITION_FILES: [(&str, &str); 16] = [
    ("C1", include_str!("../data/conditions/C1.json")),
    ("C2", include_str!("../data/conditions/C2.json")),
    ("C3", include_str!("../data/conditions/C3.json")),
    ("C4", include_str!("../data/conditions/C4.json")),
    ("C5", include_str!("../data/conditions/C5.json")),
    ("C6", include_str!("../data/conditions/C6.json")),
    ("C7", include_str!("../data/conditions/C7.json")),
    ("C8", include_str!("../data/conditions/C8.json")),
    ("C9", include_str!("../data/conditions/C9.json")),
    ("C10", include_str!("../data/conditions/C10.json")),
    ("C11", include_str!("../data/conditions/C11.json")),
    ("C12", include_str!("../data/conditions/C12.json")),
    ("C13", include_str!("../data/conditions/C13.json")),
    ("C14", include_str!("../data/conditions/C14.json")),
    ("C15", include_str!("../data/conditions/C15.json")),
    ("C16", include_str!("../data/conditions/C16.json")),
];

pub fn condition_names() -> impl Iterator<Item = &'static str> {
    CONDITION_FILES.iter().map(|(n, _)| *n)
}

/// One of the sixteen built-in traffic conditions, at full horizon.
pub fn builtin_condition(name: &str) -> Result<Scenario, ConfigError> {
    let (_, text) = CONDITION_FILES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| ConfigError::UnknownCondition(name.to_string()))?;
    Scenario::from_json(text)
}

pub fn builtin_conditions() -> Vec<Scenario> {
    condition_names()
        .map(|n| builtin_condition(n).expect("shipped condition parses"))
        .collect()
}

/// Mean detected queue length and mean waiting time (time units) over the
/// moving flows of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub queue_len: f64,
    pub wait: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    queues: [VecDeque<u64>; FLOW_COUNT],
    last_arrival: [Option<u64>; FLOW_COUNT],
    green_credit: [u32; FLOW_COUNT],
    phase: PhaseId,
    phase_remaining: u32,
    green_elapsed: u64,
    all_red_remaining: u32,
    pending: Option<(PhaseId, u32)>,
    clock: u64,
}

impl TrafficState {
    pub fn new(phase: PhaseId, duration: u32) -> Self {
        Self {
            queues: Default::default(),
            last_arrival: [None; FLOW_COUNT],
            green_credit: [0; FLOW_COUNT],
            phase,
            phase_remaining: duration,
            green_elapsed: 0,
            all_red_remaining: 0,
            pending: None,
            clock: 0,
        }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn phase(&self) -> PhaseId {
        self.phase
    }

    pub fn phase_remaining(&self) -> u32 {
        self.phase_remaining
    }

    /// Green time accumulated by the current phase since it was switched in.
    pub fn green_elapsed(&self) -> u64 {
        self.green_elapsed
    }

    pub fn all_red_remaining(&self) -> u32 {
        self.all_red_remaining
    }

    pub fn in_all_red(&self) -> bool {
        self.all_red_remaining > 0
    }

    pub fn queue(&self, flow: FlowId) -> &VecDeque<u64> {
        &self.queues[flow.index()]
    }

    pub fn queue_len(&self, flow: FlowId) -> usize {
        self.queues[flow.index()].len()
    }

    pub fn total_queued(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    pub fn max_queue_len(&self) -> usize {
        self.queues.iter().map(VecDeque::len).max().unwrap_or(0)
    }

    pub fn mean_queue_len(&self) -> f64 {
        self.total_queued() as f64 / FLOW_COUNT as f64
    }

    /// Whether any vehicle arrived on `flow` during the last `window` time
    /// units (arrivals of the step just simulated included).
    pub fn arrived_within(&self, flow: FlowId, window: u64) -> bool {
        self.last_arrival[flow.index()].is_some_and(|t| self.clock - t <= window)
    }

    pub fn observe(&self, p: PhaseId) -> Observation {
        let flows = p.moving_flows();
        let (mut count, mut wait_sum) = (0usize, 0u64);
        for f in flows {
            let q = &self.queues[f.index()];
            count += q.len();
            wait_sum += q.iter().map(|&t| self.clock - t).sum::<u64>();
        }
        let wait = if count == 0 {
            0.0
        } else {
            wait_sum as f64 / count as f64
        };
        Observation {
            queue_len: count as f64 / flows.len() as f64,
            wait,
        }
    }

    /// A subset is observed through its entrance phase.
    pub fn observe_subset(&self, s: Subset) -> Observation {
        self.observe(s.entrance())
    }

    #[cfg(test)]
    pub(crate) fn set_queue(&mut self, flow: FlowId, arrivals: &[u64]) {
        self.queues[flow.index()] = arrivals.iter().copied().collect();
    }

    #[cfg(test)]
    pub(crate) fn set_clock(&mut self, t: u64) {
        self.clock = t;
    }

    #[cfg(test)]
    pub(crate) fn force_phase(&mut self, p: PhaseId) {
        self.phase = p;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub veh_miss: u64,
    pub veh_pass: u64,
    /// Sum of per-vehicle stop-line delays, time units.
    pub delay_sum: u64,
    /// Mean delay per passed vehicle, seconds.
    pub veh_delay_s: f64,
    pub arrivals: [u64; FLOW_COUNT],
    /// `(t, mean queue length over the eight flows)`.
    pub queue_trace: Vec<(u64, f64)>,
}

impl SimMetrics {
    fn new() -> Self {
        Self {
            veh_miss: 0,
            veh_pass: 0,
            delay_sum: 0,
            veh_delay_s: 0.0,
            arrivals: [0; FLOW_COUNT],
            queue_trace: Vec::new(),
        }
    }

    pub fn total_arrivals(&self) -> u64 {
        self.arrivals.iter().sum()
    }

    pub fn mean_delay_seconds(&self, time_unit_seconds: f64) -> f64 {
        if self.veh_pass == 0 {
            0.0
        } else {
            self.delay_sum as f64 * time_unit_seconds / self.veh_pass as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalEvent {
    Switch,
    Extend,
    AllRed,
}

impl SignalEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalEvent::Switch => "switch",
            SignalEvent::Extend => "extend",
            SignalEvent::AllRed => "allred",
        }
    }
}

/// One row of the decision log. For `allred` the phase is the one that
/// will start once the all-red interval ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub t: u64,
    pub event: SignalEvent,
    pub phase: PhaseId,
    pub duration: u32,
}

pub struct Simulator {
    scenario: Scenario,
    state: TrafficState,
    metrics: SimMetrics,
    rng: ChaCha8Rng,
    log: Option<Vec<LogEntry>>,
    cached: [(f64, Option<Poisson<f64>>); FLOW_COUNT],
}

impl Simulator {
    pub fn new(
        scenario: Scenario,
        initial: PhaseId,
        initial_duration: u32,
    ) -> Result<Self, ConfigError> {
        scenario.validate()?;
        if initial_duration == 0 {
            return Err(ConfigError::Scenario(
                "initial phase duration must be positive".into(),
            ));
        }
        let rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
        Ok(Self {
            scenario,
            state: TrafficState::new(initial, initial_duration),
            metrics: SimMetrics::new(),
            rng,
            log: None,
            cached: [(f64::NAN, None); FLOW_COUNT],
        })
    }

    /// A simulator whose initial phase and duration come from `ctrl`.
    pub fn for_controller(scenario: Scenario, ctrl: &dyn Controller) -> Result<Self, ConfigError> {
        let (p, d) = ctrl.initial();
        Self::new(scenario, p, d)
    }

    pub fn record_log(&mut self) {
        let (p, d) = (self.state.phase, self.state.phase_remaining);
        self.log = Some(vec![LogEntry {
            t: self.state.clock,
            event: SignalEvent::Switch,
            phase: p,
            duration: d,
        }]);
    }

    pub fn state(&self) -> &TrafficState {
        &self.state
    }

    pub fn metrics(&self) -> &SimMetrics {
        &self.metrics
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn log(&self) -> Option<&[LogEntry]> {
        self.log.as_deref()
    }

    pub fn finished(&self) -> bool {
        self.state.clock >= self.scenario.horizon
    }

    fn push_log(&mut self, event: SignalEvent, phase: PhaseId, duration: u32) {
        if let Some(log) = &mut self.log {
            log.push(LogEntry {
                t: self.state.clock,
                event,
                phase,
                duration,
            });
        }
    }

    /// Starts a pending phase once all-red has elapsed, and consults the
    /// controller if the running green has expired.
    pub fn control(&mut self, ctrl: &mut dyn Controller) {
        if self.state.all_red_remaining > 0 {
            return;
        }
        if let Some((phase, duration)) = self.state.pending.take() {
            self.start_phase(phase, duration);
        }
        if self.state.phase_remaining == 0 {
            let cmd = ctrl.decide(&self.state);
            self.apply(cmd);
        }
    }

    fn start_phase(&mut self, phase: PhaseId, duration: u32) {
        self.state.phase = phase;
        self.state.phase_remaining = duration;
        self.state.green_elapsed = 0;
        self.push_log(SignalEvent::Switch, phase, duration);
    }

    pub fn apply(&mut self, cmd: SignalCommand) {
        debug_assert!(cmd.is_valid(), "{cmd:?}");
        match cmd {
            SignalCommand::Extend { duration } => {
                self.state.phase_remaining = duration;
                self.push_log(SignalEvent::Extend, self.state.phase, duration);
            }
            SignalCommand::Switch { phase, duration } => self.start_phase(phase, duration),
            SignalCommand::AllRedThenSwitch {
                phase,
                all_red,
                duration,
            } => {
                self.state.phase_remaining = 0;
                self.state.all_red_remaining = all_red;
                self.state.pending = Some((phase, duration));
                self.push_log(SignalEvent::AllRed, phase, all_red);
            }
        }
    }

    fn draw_arrivals(&mut self, i: usize, t: f64) -> u64 {
        let rate = self.scenario.rate_schedule.rate_at(FLOWS[i], t);
        if rate != self.cached[i].0 {
            self.cached[i] = (
                rate,
                if rate > 0.0 {
                    Poisson::new(rate).ok()
                } else {
                    None
                },
            );
        }
        match &self.cached[i].1 {
            Some(dist) => dist.sample(&mut self.rng) as u64,
            None => 0,
        }
    }

    /// Advances one time unit: arrivals, all-red or discharge, bookkeeping.
    pub fn advance(&mut self) {
        let now = self.state.clock;
        let cap = self.scenario.detector_cap;
        for i in 0..FLOW_COUNT {
            let n = self.draw_arrivals(i, now as f64);
            if n == 0 {
                continue;
            }
            self.metrics.arrivals[i] += n;
            self.state.last_arrival[i] = Some(now);
            let q = &mut self.state.queues[i];
            for _ in 0..n {
                if q.len() < cap {
                    q.push_back(now);
                } else {
                    self.metrics.veh_miss += 1;
                }
            }
        }

        if self.state.all_red_remaining > 0 {
            self.state.all_red_remaining -= 1;
            self.state.green_credit = [0; FLOW_COUNT];
        } else {
            let headway = self.scenario.discharge_headway;
            let phase = self.state.phase;
            for (i, flow) in FLOWS.iter().enumerate() {
                if !phase.is_green(*flow) {
                    self.state.green_credit[i] = 0;
                    continue;
                }
                let credit = &mut self.state.green_credit[i];
                *credit = (*credit + 1).min(headway);
                if *credit == headway {
                    if let Some(arrived) = self.state.queues[i].pop_front() {
                        *credit = 0;
                        self.metrics.veh_pass += 1;
                        self.metrics.delay_sum += now - arrived;
                    }
                }
            }
            self.state.phase_remaining = self.state.phase_remaining.saturating_sub(1);
            self.state.green_elapsed += 1;
        }

        self.state.clock += 1;
        if self
            .state
            .clock
            .is_multiple_of(self.scenario.trace_interval)
        {
            let mean = self.state.mean_queue_len();
            self.metrics.queue_trace.push((self.state.clock, mean));
        }
    }

    /// Runs to the horizon and returns the final metrics.
    pub fn run_with(&mut self, ctrl: &mut dyn Controller) -> &SimMetrics {
        while !self.finished() {
            self.control(ctrl);
            self.advance();
        }
        self.metrics.veh_delay_s = self
            .metrics
            .mean_delay_seconds(self.scenario.time_unit_seconds);
        &self.metrics
    }

    pub fn into_parts(self) -> (SimMetrics, Option<Vec<LogEntry>>) {
        (self.metrics, self.log)
    }
}

/// Simulates `scenario` under `ctrl` to its horizon.
pub fn run(scenario: &Scenario, ctrl: &mut dyn Controller) -> Result<SimMetrics, ConfigError> {
    let mut sim = Simulator::for_controller(scenario.clone(), ctrl)?;
    sim.run_with(ctrl);
    Ok(sim.into_parts().0)
}

/// Like [`run`], also returning the decision log.
pub fn run_logged(
    scenario: &Scenario,
    ctrl: &mut dyn Controller,
) -> Result<(SimMetrics, Vec<LogEntry>), ConfigError> {
    let mut sim = Simulator::for_controller(scenario.clone(), ctrl)?;
    sim.record_log();
    sim.run_with(ctrl);
    let (m, log) = sim.into_parts();
    Ok((m, log.unwrap_or_default()))
}
