//! Signal-control policies: vehicle-actuated, FUZZY-TURN, FUZZY-JUMP and
//! the two-layer FUZZY-MIX (also used, with tuned membership functions, as
//! FUZZY-MIX-OPT).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{FuzzyEngine, FuzzyError, MembershipSet, TermShape, ET_DOMAIN, VARIABLE_LAYOUT};
use crate::phases::{consistent, PhaseId, SignalCommand, Subset};
use crate::pso::trapezoid_bounds;
use crate::sim::TrafficState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("{variable}.{term}: {field} = {value} outside [{lo}, {hi}]")]
    Range {
        variable: String,
        term: String,
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error("invalid controller parameters: {0}")]
    Params(String),
    #[error("unknown controller `{0}` (expected va, turn, jump, mix or mix-opt)")]
    UnknownKind(String),
    #[error("mix-opt needs a membership-function file")]
    MissingMembership,
}

/// Timing parameters, all in time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    /// Θ: duration given to a newly activated phase.
    pub initial_duration: u32,
    /// Φ: a green is extended only if the inferred extension exceeds this.
    pub extension_threshold: f64,
    /// Δ: FUZZY-JUMP decision interval.
    pub urgency_interval: u32,
    /// θ: all-red interval before a cross-subset switch.
    pub all_red: u32,
    pub va_window: u64,
    pub va_increment: u32,
    pub va_max_green: u64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            initial_duration: 10,
            extension_threshold: 5.0,
            urgency_interval: 10,
            all_red: 5,
            va_window: 4,
            va_increment: 4,
            va_max_green: 120,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let positive = self.initial_duration > 0
            && self.urgency_interval > 0
            && self.all_red > 0
            && self.va_window > 0
            && self.va_increment > 0
            && self.va_max_green > 0
            && self.extension_threshold > 0.0;
        if !positive {
            return Err(ControllerError::Params(
                "all parameters must be positive".into(),
            ));
        }
        if self.extension_threshold >= ET_DOMAIN.hi {
            return Err(ControllerError::Params(format!(
                "extension threshold {} must be below {}",
                self.extension_threshold, ET_DOMAIN.hi
            )));
        }
        Ok(())
    }
}

/// A signal policy consulted at every green expiry.
pub trait Controller: Send {
    fn name(&self) -> &'static str;

    /// Phase and duration the run starts with.
    fn initial(&self) -> (PhaseId, u32);

    fn decide(&mut self, state: &TrafficState) -> SignalCommand;
}

/// Extension durations are whole time units: `ceil(ET)`, at least 1.
fn extension_units(et: f64) -> u32 {
    (et.ceil() as u32).max(1)
}

/// Vehicle-actuated control over the phase circle.
#[derive(Debug, Clone)]
pub struct VehicleActuated {
    params: ControllerParams,
}

impl VehicleActuated {
    pub fn new(params: ControllerParams) -> Self {
        Self { params }
    }
}

impl Controller for VehicleActuated {
    fn name(&self) -> &'static str {
        "va"
    }

    fn initial(&self) -> (PhaseId, u32) {
        (Subset::I.entrance(), self.params.initial_duration)
    }

    fn decide(&mut self, state: &TrafficState) -> SignalCommand {
        let p = &self.params;
        let current = state.phase();
        let detected = current
            .moving_flows()
            .iter()
            .any(|&f| state.arrived_within(f, p.va_window));
        let elapsed = state.green_elapsed();
        if detected && elapsed < p.va_max_green {
            let room = (p.va_max_green - elapsed).min(u64::from(p.va_increment)) as u32;
            SignalCommand::Extend { duration: room }
        } else {
            SignalCommand::Switch {
                phase: current.next_in_circle(),
                duration: p.initial_duration,
            }
        }
    }
}

/// Extends the green while the inferred ET exceeds Φ, otherwise moves on
/// along the phase circle. Never inserts all-red.
#[derive(Debug, Clone)]
pub struct FuzzyTurn {
    engine: FuzzyEngine,
    params: ControllerParams,
}

impl FuzzyTurn {
    pub fn new(engine: FuzzyEngine, params: ControllerParams) -> Self {
        Self { engine, params }
    }
}

impl Controller for FuzzyTurn {
    fn name(&self) -> &'static str {
        "turn"
    }

    fn initial(&self) -> (PhaseId, u32) {
        (Subset::I.entrance(), self.params.initial_duration)
    }

    fn decide(&mut self, state: &TrafficState) -> SignalCommand {
        let current = state.phase();
        let obs = state.observe(current);
        let et = self.engine.extension(obs.queue_len, obs.wait).crisp;
        if et > self.params.extension_threshold {
            SignalCommand::Extend {
                duration: extension_units(et),
            }
        } else {
            SignalCommand::Switch {
                phase: current.next_in_circle(),
                duration: self.params.initial_duration,
            }
        }
    }
}

/// Every Δ, jumps to the phase of highest urgency, with all-red before an
/// inconsistent switch.
#[derive(Debug, Clone)]
pub struct FuzzyJump {
    engine: FuzzyEngine,
    params: ControllerParams,
}

impl FuzzyJump {
    pub fn new(engine: FuzzyEngine, params: ControllerParams) -> Self {
        Self { engine, params }
    }

    /// Most urgent phase; ties keep `current`, then prefer the lowest id.
    pub fn most_urgent(&self, state: &TrafficState) -> PhaseId {
        let current = state.phase();
        let urgency = PhaseId::ALL.map(|p| {
            let o = state.observe(p);
            self.engine.urgency(o.queue_len, o.wait).crisp
        });
        let max = urgency.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if urgency[current.id() as usize] == max {
            return current;
        }
        let best = urgency.iter().position(|&u| u == max).unwrap_or(0);
        PhaseId::ALL[best]
    }
}

impl Controller for FuzzyJump {
    fn name(&self) -> &'static str {
        "jump"
    }

    fn initial(&self) -> (PhaseId, u32) {
        (Subset::I.entrance(), self.params.urgency_interval)
    }

    fn decide(&mut self, state: &TrafficState) -> SignalCommand {
        let p = &self.params;
        let current = state.phase();
        let target = self.most_urgent(state);
        if target == current {
            SignalCommand::Extend {
                duration: p.urgency_interval,
            }
        } else if consistent(current, target) {
            SignalCommand::Switch {
                phase: target,
                duration: p.urgency_interval,
            }
        } else {
            SignalCommand::AllRedThenSwitch {
                phase: target,
                all_red: p.all_red,
                duration: p.urgency_interval,
            }
        }
    }
}

/// Two-layer controller. The outer layer compares subset urgencies (each
/// subset observed through its entrance phase) and hands the signal to the
/// other subset, via all-red, only when that subset is strictly more
/// urgent. Otherwise the inner layer extends or advances within the
/// current subset.
#[derive(Debug, Clone)]
pub struct FuzzyMix {
    engine: FuzzyEngine,
    params: ControllerParams,
    optimized: bool,
}

impl FuzzyMix {
    pub fn new(engine: FuzzyEngine, params: ControllerParams) -> Self {
        Self {
            engine,
            params,
            optimized: false,
        }
    }

    /// The same policy labelled as running tuned membership functions.
    pub fn optimized(engine: FuzzyEngine, params: ControllerParams) -> Self {
        Self {
            engine,
            params,
            optimized: true,
        }
    }

    pub fn engine(&self) -> &FuzzyEngine {
        &self.engine
    }
}

impl Controller for FuzzyMix {
    fn name(&self) -> &'static str {
        if self.optimized {
            "mix-opt"
        } else {
            "mix"
        }
    }

    fn initial(&self) -> (PhaseId, u32) {
        (Subset::I.entrance(), self.params.initial_duration)
    }

    fn decide(&mut self, state: &TrafficState) -> SignalCommand {
        let p = &self.params;
        let current = state.phase();
        let here = current.subset();
        let there = here.other();
        let urgency = |s: Subset| {
            let o = state.observe_subset(s);
            self.engine.urgency(o.queue_len, o.wait).crisp
        };
        if urgency(here) >= urgency(there) {
            let o = state.observe(current);
            let et = self.engine.extension(o.queue_len, o.wait).crisp;
            if et > p.extension_threshold {
                SignalCommand::Extend {
                    duration: extension_units(et),
                }
            } else {
                SignalCommand::Switch {
                    phase: current.next_in_subset(),
                    duration: p.initial_duration,
                }
            }
        } else {
            SignalCommand::AllRedThenSwitch {
                phase: there.entrance(),
                all_red: p.all_red,
                duration: p.initial_duration,
            }
        }
    }
}

/// Checks every trapezoid term of `set` against the PSO search box.
pub fn check_ranges(set: &MembershipSet) -> Result<(), ControllerError> {
    let mut k = 0;
    for (var, &(_, _, names)) in set.variables().iter().zip(VARIABLE_LAYOUT.iter()) {
        for name in names {
            let term = var.term(name).expect("set built from layout");
            if let TermShape::Trapezoid(t) = term.shape() {
                let b = trapezoid_bounds(k);
                for (field, value, (lo, hi)) in [
                    ("U", t.upper, b.upper),
                    ("D", t.spread, b.spread),
                    ("C", t.center, b.center),
                ] {
                    if !(lo..=hi).contains(&value) {
                        return Err(ControllerError::Range {
                            variable: var.name().to_string(),
                            term: name.to_string(),
                            field,
                            value,
                            lo,
                            hi,
                        });
                    }
                }
            }
            k += 1;
        }
    }
    Ok(())
}

/// FUZZY-MIX-OPT from a membership document. Trapezoid terms must lie in
/// the PSO search box; breakpoint terms are taken as given.
pub fn load_optimized(json: &str, params: ControllerParams) -> Result<FuzzyMix, ControllerError> {
    let set = MembershipSet::from_json(json)?;
    optimized_from_set(set, params)
}

pub fn optimized_from_set(
    set: MembershipSet,
    params: ControllerParams,
) -> Result<FuzzyMix, ControllerError> {
    check_ranges(&set)?;
    Ok(FuzzyMix::optimized(FuzzyEngine::new(set)?, params))
}

const SHIPPED_OPTIMIZED: &str = include_str!("../data/mix_opt.json");

/// The membership set trained by the bundled `optimize` run, used by
/// mix-opt when no other document is given.
pub fn shipped_optimized() -> MembershipSet {
    MembershipSet::from_json(SHIPPED_OPTIMIZED).expect("shipped membership document parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "va")]
    Va,
    #[serde(rename = "turn")]
    Turn,
    #[serde(rename = "jump")]
    Jump,
    #[serde(rename = "mix")]
    Mix,
    #[serde(rename = "mix-opt")]
    MixOpt,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 5] = [
        ControllerKind::Va,
        ControllerKind::Turn,
        ControllerKind::Jump,
        ControllerKind::Mix,
        ControllerKind::MixOpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Va => "va",
            ControllerKind::Turn => "turn",
            ControllerKind::Jump => "jump",
            ControllerKind::Mix => "mix",
            ControllerKind::MixOpt => "mix-opt",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ControllerKind::Va => "VA",
            ControllerKind::Turn => "FUZZY-TURN",
            ControllerKind::Jump => "FUZZY-JUMP",
            ControllerKind::Mix => "FUZZY-MIX",
            ControllerKind::MixOpt => "FUZZY-MIX-OPT",
        }
    }

    /// Builds a controller. `tuned` is required for `MixOpt` and ignored by
    /// the others, which always use the hand-crafted set.
    pub fn build(
        self,
        params: ControllerParams,
        tuned: Option<&MembershipSet>,
    ) -> Result<Box<dyn Controller>, ControllerError> {
        params.validate()?;
        let engine = FuzzyEngine::default;
        Ok(match self {
            ControllerKind::Va => Box::new(VehicleActuated::new(params)),
            ControllerKind::Turn => Box::new(FuzzyTurn::new(engine(), params)),
            ControllerKind::Jump => Box::new(FuzzyJump::new(engine(), params)),
            ControllerKind::Mix => Box::new(FuzzyMix::new(engine(), params)),
            ControllerKind::MixOpt => {
                let set = tuned.ok_or(ControllerError::MissingMembership)?;
                Box::new(optimized_from_set(set.clone(), params)?)
            }
        })
    }
}

impl FromStr for ControllerKind {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ControllerError::UnknownKind(s.to_string()))
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
