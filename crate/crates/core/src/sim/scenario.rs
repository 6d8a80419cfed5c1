//! Scenario description and the spawn plans derived from it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::controller::{ControllerGains, DestinationLine, Route};
use crate::dynamics::{AgentParams, AgentState};
use crate::error::{DomainError, ValidationError};
use crate::math::Vec2;

/// Built-in scenario geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Agents enter a square from random edges and cross to the opposite edge.
    DynamicInflowSquare,
    /// Eight agents, two per edge, all crossing at once.
    AntipodalOctet,
    /// Two agents spawned inside each other's safety area.
    TwoAgentConflict,
    /// Agents listed explicitly in `[vehicle]` sections.
    Custom,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::DynamicInflowSquare => "dynamic_inflow_square",
            ScenarioKind::AntipodalOctet => "antipodal_octet",
            ScenarioKind::TwoAgentConflict => "two_agent_conflict",
            ScenarioKind::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dynamic_inflow_square" => Ok(ScenarioKind::DynamicInflowSquare),
            "antipodal_octet" => Ok(ScenarioKind::AntipodalOctet),
            "two_agent_conflict" => Ok(ScenarioKind::TwoAgentConflict),
            "custom" => Ok(ScenarioKind::Custom),
            other => Err(format!(
                "unknown scenario kind `{other}` (expected dynamic_inflow_square, antipodal_octet, two_agent_conflict or custom)"
            )),
        }
    }
}

/// Edge of the square region, counter-clockwise from the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    South,
    East,
    North,
    West,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::South, Edge::East, Edge::North, Edge::West];

    pub fn as_str(self) -> &'static str {
        match self {
            Edge::South => "south",
            Edge::East => "east",
            Edge::North => "north",
            Edge::West => "west",
        }
    }

    /// Point at fraction `u ∈ [0, 1]` along this edge of a square of side `side`.
    pub fn point(self, side: f64, u: f64) -> Vec2 {
        let s = u * side;
        match self {
            Edge::South => Vec2::new(s, 0.0),
            Edge::East => Vec2::new(side, s),
            Edge::North => Vec2::new(s, side),
            Edge::West => Vec2::new(0.0, s),
        }
    }

    /// The line containing the opposite edge.
    pub fn opposite_line(self, side: f64) -> DestinationLine {
        let (anchor, normal) = match self {
            Edge::South => (Vec2::new(0.0, side), Vec2::new(0.0, 1.0)),
            Edge::North => (Vec2::ZERO, Vec2::new(0.0, 1.0)),
            Edge::West => (Vec2::new(side, 0.0), Vec2::new(1.0, 0.0)),
            Edge::East => (Vec2::ZERO, Vec2::new(1.0, 0.0)),
        };
        DestinationLine::new(anchor, normal).expect("axis normals are unit length")
    }
}

/// Which edge a scheduled spawn uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeChoice {
    Random,
    Fixed(Edge),
}

impl fmt::Display for EdgeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeChoice::Random => f.write_str("random"),
            EdgeChoice::Fixed(e) => f.write_str(e.as_str()),
        }
    }
}

impl FromStr for EdgeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(EdgeChoice::Random),
            "south" => Ok(EdgeChoice::Fixed(Edge::South)),
            "east" => Ok(EdgeChoice::Fixed(Edge::East)),
            "north" => Ok(EdgeChoice::Fixed(Edge::North)),
            "west" => Ok(EdgeChoice::Fixed(Edge::West)),
            other => Err(format!(
                "unknown edge `{other}` (expected south, east, north, west or random)"
            )),
        }
    }
}

/// `count` agents appearing at `time` on `edge`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpawnBatch {
    pub time: f64,
    pub edge: EdgeChoice,
    pub count: u32,
}

/// Random inflow: `count` agents at uniformly drawn times in `[start, end]`,
/// each on a random edge, plus any explicit batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Inflow {
    pub count: u32,
    pub start: f64,
    pub end: f64,
    pub schedule: Vec<SpawnBatch>,
}

/// An explicitly placed agent.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub time: f64,
    pub position: Vec2,
    pub velocity: Vec2,
    pub route: Vec<DestinationLine>,
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Side length of the square region, m.
    pub side: f64,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub params: AgentParams,
    pub gains: ControllerGains,
    /// Used by [`ScenarioKind::DynamicInflowSquare`].
    pub inflow: Inflow,
    /// Initial filtered distance for [`ScenarioKind::TwoAgentConflict`], m.
    pub separation: f64,
    /// Used by [`ScenarioKind::Custom`].
    pub vehicles: Vec<VehicleSpec>,
}

impl ScenarioConfig {
    /// Default step: 5 ms for the lab-scale octet, 10 ms otherwise.
    pub fn default_dt(kind: ScenarioKind) -> f64 {
        match kind {
            ScenarioKind::AntipodalOctet => 0.005,
            _ => 0.01,
        }
    }

    pub const DEFAULT_DURATION: f64 = 120.0;

    /// A scenario of the given kind with every tunable at its default.
    pub fn with_defaults(kind: ScenarioKind, side: f64, params: AgentParams) -> Self {
        ScenarioConfig {
            kind,
            side,
            duration: Self::DEFAULT_DURATION,
            dt: Self::default_dt(kind),
            seed: 0,
            params,
            gains: ControllerGains::with_defaults(&params, side),
            inflow: Inflow {
                count: if kind == ScenarioKind::DynamicInflowSquare {
                    40
                } else {
                    0
                },
                start: 0.0,
                end: 0.5 * Self::DEFAULT_DURATION,
                schedule: Vec::new(),
            },
            separation: 1.5 * params.r_s,
            vehicles: Vec::new(),
        }
    }

    /// 250 m square with r_s = 10 m, r_a = 15 m, v_m = 20 m/s, l = 5.
    pub fn reference_square(agents: u32, seed: u64) -> Self {
        let params = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
        let mut cfg = Self::with_defaults(ScenarioKind::DynamicInflowSquare, 250.0, params);
        cfg.inflow.count = agents;
        cfg.seed = seed;
        cfg
    }

    /// 2.5 m square, eight agents, r_s = 0.2 m, r_a = 0.4 m, v_m = 0.15 m/s, l = 5.
    pub fn lab_octet() -> Self {
        let params = AgentParams::with_defaults(0.2, 0.4, 0.15, 5.0);
        Self::with_defaults(ScenarioKind::AntipodalOctet, 2.5, params)
    }

    /// Reference-scale pair spawned `1.5·r_s` apart.
    pub fn conflict_pair() -> Self {
        let params = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
        Self::with_defaults(ScenarioKind::TwoAgentConflict, 250.0, params)
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    /// Tick at which something scheduled for `time` happens.
    pub fn tick_of(&self, time: f64) -> u64 {
        (time / self.dt).round().max(0.0) as u64
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for (name, value) in [
            ("side", self.side),
            ("duration", self.duration),
            ("dt", self.dt),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ValidationError::NotPositive { name, value });
            }
        }
        if self.dt > self.duration {
            return Err(ValidationError::Scenario(format!(
                "dt = {} exceeds duration = {}",
                self.dt, self.duration
            )));
        }
        self.params.validate()?;
        self.gains.validate(&self.params)?;
        match self.kind {
            ScenarioKind::DynamicInflowSquare => {
                let i = &self.inflow;
                if !(i.start.is_finite() && i.end.is_finite() && 0.0 <= i.start && i.start <= i.end)
                {
                    return Err(ValidationError::Scenario(format!(
                        "inflow window must satisfy 0 <= start <= end, got [{}, {}]",
                        i.start, i.end
                    )));
                }
                if i.schedule
                    .iter()
                    .any(|b| !(b.time.is_finite() && b.time >= 0.0))
                {
                    return Err(ValidationError::Scenario("spawn times must be >= 0".into()));
                }
            }
            ScenarioKind::TwoAgentConflict => {
                if !(self.separation.is_finite() && self.separation > 0.0) {
                    return Err(ValidationError::NotPositive {
                        name: "separation",
                        value: self.separation,
                    });
                }
            }
            ScenarioKind::Custom => {
                if self.vehicles.is_empty() {
                    return Err(ValidationError::Scenario(
                        "custom scenario needs at least one [vehicle]".into(),
                    ));
                }
                for v in &self.vehicles {
                    if !(v.time.is_finite() && v.time >= 0.0) {
                        return Err(ValidationError::Scenario(
                            "vehicle time must be >= 0".into(),
                        ));
                    }
                    if v.route.is_empty() {
                        return Err(ValidationError::Scenario(
                            "vehicle needs at least one line".into(),
                        ));
                    }
                }
            }
            ScenarioKind::AntipodalOctet => {}
        }
        Ok(())
    }

    /// Rough check that the expected number of agents in the air fits in the
    /// region without overlapping safety areas. Returns a warning message.
    pub fn packing_warning(&self) -> Option<String> {
        if self.kind != ScenarioKind::DynamicInflowSquare {
            return None;
        }
        let batches: u32 = self.inflow.schedule.iter().map(|b| b.count).sum();
        let window = (self.inflow.end - self.inflow.start).max(self.dt);
        let rate = self.inflow.count as f64 / window;
        let crossing = self.side / self.params.v_m;
        let airborne = rate * crossing + batches as f64;
        // Hexagonal packing of discs of radius r_s.
        let capacity =
            0.9069 * self.side * self.side / (std::f64::consts::PI * self.params.r_s.powi(2));
        (airborne > capacity).then(|| {
            format!(
                "about {airborne:.0} agents airborne at once exceeds the {capacity:.0} safety discs that fit in the region"
            )
        })
    }
}

/// How a scheduled agent is placed.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Placement {
    Edge(EdgeChoice),
    Fixed {
        position: Vec2,
        velocity: Vec2,
        route: Vec<DestinationLine>,
    },
}

/// One agent due to appear at `tick`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpawnPlan {
    pub tick: u64,
    pub placement: Placement,
}

fn fixed(tick: u64, position: Vec2, line: DestinationLine) -> SpawnPlan {
    SpawnPlan {
        tick,
        placement: Placement::Fixed {
            position,
            velocity: Vec2::ZERO,
            route: vec![line],
        },
    }
}

/// Expands a scenario into spawn plans ordered by tick.
///
/// Random inflow times are drawn here, before any spawn position, so the
/// whole run is a function of the seed.
pub(crate) fn spawn_plans<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<SpawnPlan> {
    let side = cfg.side;
    let mut plans = Vec::new();
    match cfg.kind {
        ScenarioKind::DynamicInflowSquare => {
            let mut times: Vec<f64> = (0..cfg.inflow.count)
                .map(|_| cfg.inflow.start + (cfg.inflow.end - cfg.inflow.start) * rng.gen::<f64>())
                .collect();
            times.sort_by(f64::total_cmp);
            plans.extend(times.into_iter().map(|t| SpawnPlan {
                tick: cfg.tick_of(t),
                placement: Placement::Edge(EdgeChoice::Random),
            }));
            for batch in &cfg.inflow.schedule {
                for _ in 0..batch.count {
                    plans.push(SpawnPlan {
                        tick: cfg.tick_of(batch.time),
                        placement: Placement::Edge(batch.edge),
                    });
                }
            }
        }
        ScenarioKind::AntipodalOctet => {
            // Two agents per edge, arranged with quarter-turn symmetry so that
            // no pair starts exactly head-on.
            for edge in Edge::ALL {
                for u in [0.3, 0.6] {
                    plans.push(fixed(0, edge.point(side, u), edge.opposite_line(side)));
                }
            }
            // Edge::point runs east along the south edge and north along the
            // east edge; mirror the north and west edges to get the rotation.
            for plan in plans.iter_mut() {
                if let Placement::Fixed { position, .. } = &mut plan.placement {
                    if position.y == side && position.x != side {
                        position.x = side - position.x;
                    } else if position.x == 0.0 {
                        position.y = side - position.y;
                    }
                }
            }
        }
        ScenarioKind::TwoAgentConflict => {
            let half = 0.5 * cfg.separation;
            let line = Edge::South.opposite_line(side);
            plans.push(fixed(0, Vec2::new(0.5 * side - half, 0.0), line));
            plans.push(fixed(0, Vec2::new(0.5 * side + half, 0.0), line));
        }
        ScenarioKind::Custom => {
            for v in &cfg.vehicles {
                plans.push(SpawnPlan {
                    tick: cfg.tick_of(v.time),
                    placement: Placement::Fixed {
                        position: v.position,
                        velocity: v.velocity,
                        route: v.route.clone(),
                    },
                });
            }
        }
    }
    // Stable: equal ticks keep declaration order.
    plans.sort_by_key(|p| p.tick);
    plans
}

/// Places a new agent at rest on an edge, targeting the opposite edge.
pub fn spawn_agent<R: Rng>(ordinal: u32, side: f64, edge: EdgeChoice, rng: &mut R) -> AgentState {
    let edge = match edge {
        EdgeChoice::Random => Edge::ALL[rng.gen_range(0..4)],
        EdgeChoice::Fixed(e) => e,
    };
    let u: f64 = rng.gen();
    let route = Route::new(vec![edge.opposite_line(side)]).expect("one line");
    AgentState::at_rest(ordinal, edge.point(side, u), route)
}

pub(crate) fn realize<R: Rng>(
    plan: &SpawnPlan,
    ordinal: u32,
    side: f64,
    rng: &mut R,
) -> Result<AgentState, DomainError> {
    match &plan.placement {
        Placement::Edge(choice) => Ok(spawn_agent(ordinal, side, *choice, rng)),
        Placement::Fixed {
            position,
            velocity,
            route,
        } => Ok(AgentState {
            ordinal,
            position: *position,
            velocity: *velocity,
            active: true,
            route: Route::new(route.clone())?,
        }),
    }
}
