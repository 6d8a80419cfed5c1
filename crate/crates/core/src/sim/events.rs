use std::fmt;

use serde::Serialize;

/// What happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Spawn,
    /// Final line reached; the agent leaves the airspace.
    Arrival,
    /// Intermediate line reached; the route moved on.
    LineSwitch,
    /// A pair that met compliantly got closer than `2·r_s` beyond the
    /// discrete-time tolerance.
    SafetyViolation,
    /// A pair dipped below `2·r_s` within the discrete-time tolerance.
    DiscretizationWarning,
    /// A new agent appeared within `2·r_s` of an agent already in the air.
    Assumption2ViolationAtSpawn,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::Arrival => "arrival",
            EventKind::LineSwitch => "line_switch",
            EventKind::SafetyViolation => "safety_violation",
            EventKind::DiscretizationWarning => "discretization_warning",
            EventKind::Assumption2ViolationAtSpawn => "assumption2_violation_at_spawn",
        }
    }

    /// Events after which the composite Lyapunov function may jump.
    pub fn changes_population(self) -> bool {
        matches!(
            self,
            EventKind::Spawn | EventKind::Arrival | EventKind::LineSwitch
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A logged event. `value` depends on the kind:
///
/// | kind | value |
/// |------|-------|
/// | spawn | filtered distance to the nearest airborne agent, if any |
/// | arrival | raw distance to the final line |
/// | line_switch | index of the new target line |
/// | safety_violation, discretization_warning | smallest filtered distance of the episode so far |
/// | assumption2_violation_at_spawn | filtered distance at spawn |
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub tick: u64,
    pub time: f64,
    pub kind: EventKind,
    pub agent_a: u32,
    pub agent_b: Option<u32>,
    pub value: Option<f64>,
}
