//! Six-phase signal plan of a four-approach, two-lane roundabout.
//!
//! Only left-turn and go-through entrance lanes are signalized; right-turn
//! traffic bypasses the circulatory lanes and is not modelled.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Movement {
    LeftTurn,
    GoThrough,
}

/// One signalized entrance lane, e.g. `0-L` or `3-S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId {
    pub approach: u8,
    pub movement: Movement,
}

impl FlowId {
    pub const fn new(approach: u8, movement: Movement) -> Self {
        Self { approach, movement }
    }

    /// Column position in the arrival-rate tables: `0-L..3-L, 0-S..3-S`.
    pub const fn index(self) -> usize {
        let m = match self.movement {
            Movement::LeftTurn => 0,
            Movement::GoThrough => 1,
        };
        m * 4 + self.approach as usize
    }

    pub const fn from_index(i: usize) -> Self {
        let movement = if i < 4 {
            Movement::LeftTurn
        } else {
            Movement::GoThrough
        };
        Self::new((i % 4) as u8, movement)
    }

    pub fn label(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.movement {
            Movement::LeftTurn => 'L',
            Movement::GoThrough => 'S',
        };
        write!(f, "{}-{}", self.approach, m)
    }
}

pub const FLOW_COUNT: usize = 8;

/// All controlled flows in rate-table column order.
pub const FLOWS: [FlowId; FLOW_COUNT] = [
    FlowId::from_index(0),
    FlowId::from_index(1),
    FlowId::from_index(2),
    FlowId::from_index(3),
    FlowId::from_index(4),
    FlowId::from_index(5),
    FlowId::from_index(6),
    FlowId::from_index(7),
];

const L0: FlowId = FlowId::new(0, Movement::LeftTurn);
const L1: FlowId = FlowId::new(1, Movement::LeftTurn);
const L2: FlowId = FlowId::new(2, Movement::LeftTurn);
const L3: FlowId = FlowId::new(3, Movement::LeftTurn);
const S0: FlowId = FlowId::new(0, Movement::GoThrough);
const S1: FlowId = FlowId::new(1, Movement::GoThrough);
const S2: FlowId = FlowId::new(2, Movement::GoThrough);
const S3: FlowId = FlowId::new(3, Movement::GoThrough);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    /// North-south: approaches 0 and 2.
    I,
    /// West-east: approaches 1 and 3.
    II,
}

impl Subset {
    pub const fn other(self) -> Self {
        match self {
            Subset::I => Subset::II,
            Subset::II => Subset::I,
        }
    }

    /// Phase a subset starts with after an all-red switch: the one with
    /// every lane of the subset green.
    pub const fn entrance(self) -> PhaseId {
        match self {
            Subset::I => PhaseId::P2,
            Subset::II => PhaseId::P5,
        }
    }

    pub const fn phases(self) -> [PhaseId; 3] {
        match self {
            Subset::I => [PhaseId::P0, PhaseId::P1, PhaseId::P2],
            Subset::II => [PhaseId::P3, PhaseId::P4, PhaseId::P5],
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::I => "I",
            Subset::II => "II",
        })
    }
}

pub fn other_subset(s: Subset) -> Subset {
    s.other()
}

pub fn entrance(s: Subset) -> PhaseId {
    s.entrance()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PhaseId(u8);

impl PhaseId {
    pub const P0: PhaseId = PhaseId(0);
    pub const P1: PhaseId = PhaseId(1);
    pub const P2: PhaseId = PhaseId(2);
    pub const P3: PhaseId = PhaseId(3);
    pub const P4: PhaseId = PhaseId(4);
    pub const P5: PhaseId = PhaseId(5);

    pub const ALL: [PhaseId; 6] = [Self::P0, Self::P1, Self::P2, Self::P3, Self::P4, Self::P5];

    pub const fn new(id: u8) -> Option<Self> {
        if id < 6 {
            Some(Self(id))
        } else {
            None
        }
    }

    pub const fn id(self) -> u8 {
        self.0
    }

    pub const fn subset(self) -> Subset {
        if self.0 < 3 {
            Subset::I
        } else {
            Subset::II
        }
    }

    pub const fn moving_flows(self) -> &'static [FlowId] {
        match self.0 {
            0 => &[S0, S2],
            1 => &[L0, L2],
            2 => &[L0, S0, L2, S2],
            3 => &[S1, S3],
            4 => &[L1, L3],
            _ => &[L1, S1, L3, S3],
        }
    }

    pub fn is_green(self, flow: FlowId) -> bool {
        self.moving_flows().contains(&flow)
    }

    /// Successor in the FUZZY-TURN phase circle `0→2→1→4→5→3→0`.
    pub const fn next_in_circle(self) -> PhaseId {
        PhaseId([2, 4, 1, 0, 5, 3][self.0 as usize])
    }

    /// Successor within the phase's own subset: `1→2→0→1` and `4→5→3→4`.
    pub const fn next_in_subset(self) -> PhaseId {
        PhaseId([1, 2, 0, 4, 5, 3][self.0 as usize])
    }
}

impl TryFrom<u8> for PhaseId {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        PhaseId::new(v).ok_or_else(|| format!("phase id {v} out of range 0..=5"))
    }
}

impl From<PhaseId> for u8 {
    fn from(p: PhaseId) -> u8 {
        p.0
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

pub fn moving_flows(p: PhaseId) -> &'static [FlowId] {
    p.moving_flows()
}

/// Whether `q` may follow `p` without an all-red interval: same subset.
pub fn consistent(p: PhaseId, q: PhaseId) -> bool {
    p.subset() == q.subset()
}

pub fn next_in_circle(p: PhaseId) -> PhaseId {
    p.next_in_circle()
}

pub fn next_in_subset(p: PhaseId) -> PhaseId {
    p.next_in_subset()
}

/// Controller output, durations in time units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalCommand {
    Extend {
        duration: u32,
    },
    Switch {
        phase: PhaseId,
        duration: u32,
    },
    AllRedThenSwitch {
        phase: PhaseId,
        all_red: u32,
        duration: u32,
    },
}

impl SignalCommand {
    pub fn is_valid(&self) -> bool {
        match *self {
            SignalCommand::Extend { duration } | SignalCommand::Switch { duration, .. } => {
                duration > 0
            }
            SignalCommand::AllRedThenSwitch {
                all_red, duration, ..
            } => all_red > 0 && duration > 0,
        }
    }
}

/// Human-readable dump of the phase table.
pub fn render_table() -> String {
    let mut out =
        String::from("phase  subset  moving flows        next_in_subset  next_in_circle\n");
    for p in PhaseId::ALL {
        let flows: Vec<String> = p.moving_flows().iter().map(|f| f.to_string()).collect();
        out.push_str(&format!(
            "{:<6} {:<7} {:<19} {:<15} {}\n",
            p.to_string(),
            p.subset().to_string(),
            flows.join(" "),
            p.next_in_subset().to_string(),
            p.next_in_circle()
        ));
    }
    out.push_str(&format!(
        "entrance: I -> {}, II -> {}\n",
        Subset::I.entrance(),
        Subset::II.entrance()
    ));
    out.push_str("circle: P0 -> P2 -> P1 -> P4 -> P5 -> P3 -> P0\n");
    out.push_str("consistent(p, q): same subset; cross-subset switches need all-red\n");
    out
}
