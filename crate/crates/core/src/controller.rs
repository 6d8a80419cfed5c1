//! Distributed velocity command, neighbour sensing, arrival and route switching.
//!
//! An agent's command depends only on its own state, its current destination
//! line and the ID-free [`NeighborView`] it senses:
//!
//! ```text
//! v_c = −sat( sat(k1·ξ̃_l, v_m) − Σ_j b(‖ξ̃_m,j‖)·ξ̃_m,j , v_m )
//! ```

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentParams, AgentState};
use crate::error::{DomainError, ValidationError};
use crate::math::{saturate, Vec2};
use crate::potential::{barrier_gain_bij, BarrierParams};

/// Tolerance on the unit length of a line normal.
pub const NORMAL_TOLERANCE: f64 = 1e-12;

/// The line `{x : (x − anchor)·normal = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DestinationLine {
    anchor: Vec2,
    normal: Vec2,
}

impl DestinationLine {
    pub fn new(anchor: Vec2, normal: Vec2) -> Result<Self, DomainError> {
        if !anchor.is_finite() || !normal.is_finite() {
            return Err(DomainError::NonFinite {
                what: "line geometry",
            });
        }
        let norm = normal.norm();
        if (norm - 1.0).abs() > NORMAL_TOLERANCE {
            return Err(DomainError::NonUnitNormal { norm });
        }
        Ok(DestinationLine { anchor, normal })
    }

    /// Like [`DestinationLine::new`] but rescales any nonzero normal.
    pub fn through(anchor: Vec2, direction: Vec2) -> Result<Self, DomainError> {
        let normal = direction
            .normalized()
            .ok_or(DomainError::NonUnitNormal { norm: 0.0 })?;
        Self::new(anchor, normal)
    }

    pub fn anchor(&self) -> Vec2 {
        self.anchor
    }

    pub fn normal(&self) -> Vec2 {
        self.normal
    }
}

/// Projection of `point − anchor` onto the line normal: `n·nᵀ·(point − anchor)`.
#[inline]
pub fn line_error(point: Vec2, line: &DestinationLine) -> Vec2 {
    line.normal * line.normal.dot(point - line.anchor)
}

/// Ordered chain of destination lines and the index of the current target.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    lines: Vec<DestinationLine>,
    cursor: usize,
}

impl Route {
    pub fn new(lines: Vec<DestinationLine>) -> Result<Self, DomainError> {
        if lines.is_empty() {
            return Err(DomainError::EmptyRoute);
        }
        Ok(Route { lines, cursor: 0 })
    }

    pub fn current(&self) -> &DestinationLine {
        &self.lines[self.cursor]
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn lines(&self) -> &[DestinationLine] {
        &self.lines
    }

    pub fn is_last(&self) -> bool {
        self.cursor + 1 == self.lines.len()
    }
}

/// Outcome of [`advance_route`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    /// Now targeting the line at this index.
    Switched(usize),
    /// The last line was reached; the agent leaves the airspace.
    Completed,
}

/// Moves the route to its next line after an arrival.
pub fn advance_route(route: &mut Route) -> Advance {
    if route.is_last() {
        Advance::Completed
    } else {
        route.cursor += 1;
        Advance::Switched(route.cursor)
    }
}

/// Controller gains and arrival thresholds shared by the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Line attraction gain, 1/s.
    pub k1: f64,
    /// Arrival speed threshold, m/s.
    pub eps_a: f64,
    /// Arrival distance threshold, m.
    pub eps_d: f64,
    pub barrier: BarrierParams,
}

impl ControllerGains {
    pub fn default_eps_d(side: f64) -> f64 {
        0.02 * side
    }

    pub fn default_eps_a(v_m: f64) -> f64 {
        0.05 * v_m
    }

    /// Twice the smallest gain that keeps the attraction saturated outside `eps_d`.
    pub fn default_k1(v_m: f64, eps_d: f64) -> f64 {
        2.0 * v_m / eps_d
    }

    /// Defaults for a square region of the given side length.
    pub fn with_defaults(params: &AgentParams, side: f64) -> Self {
        let eps_d = Self::default_eps_d(side);
        ControllerGains {
            k1: Self::default_k1(params.v_m, eps_d),
            eps_a: Self::default_eps_a(params.v_m),
            eps_d,
            barrier: BarrierParams::with_defaults(params.r_s, params.r_a, params.v_m),
        }
    }

    pub fn validate(&self, params: &AgentParams) -> Result<(), ValidationError> {
        for (name, value) in [
            ("k1", self.k1),
            ("eps_a", self.eps_a),
            ("eps_d", self.eps_d),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ValidationError::NotPositive { name, value });
            }
        }
        self.barrier.validate()?;
        if self.barrier.r_s != params.r_s || self.barrier.r_a != params.r_a {
            return Err(ValidationError::Scenario(
                "barrier radii must match the fleet's r_s and r_a".into(),
            ));
        }
        let need = params.v_m / self.eps_d;
        if self.k1 <= need {
            return Err(ValidationError::GainCondition { k1: self.k1, need });
        }
        Ok(())
    }
}

/// A sensed neighbour. Carries no identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub filtered: Vec2,
    pub raw: Vec2,
}

/// Neighbours whose safety area overlaps the observer's avoidance area.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborView {
    pub entries: Vec<Neighbor>,
    /// Overlapping neighbours whose raw position lies beyond the detection
    /// radius. They are still included; a nonzero count means the detection
    /// margin did not cover them.
    pub out_of_detection: usize,
}

/// Builds the neighbour view of `observer` from every other active agent.
///
/// Overlap is tested on filtered positions (`‖ξ_j − ξ_i‖ < r_s + r_a`) while
/// detectability is tested on raw positions against `r_d`.
pub fn neighbor_set(
    observer: &AgentState,
    params: &AgentParams,
    others: &[AgentState],
) -> NeighborView {
    let xi = observer.filtered_position(params.l);
    let reach = params.r_s + params.r_a;
    let mut view = NeighborView::default();
    for other in others {
        if !other.active || other.ordinal == observer.ordinal {
            continue;
        }
        let xi_j = other.filtered_position(params.l);
        if xi.distance(xi_j) < reach {
            if observer.position.distance(other.position) > params.r_d {
                view.out_of_detection += 1;
            }
            view.entries.push(Neighbor {
                filtered: xi_j,
                raw: other.position,
            });
        }
    }
    view
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Escape direction for an agent that coincides with a neighbour.
fn escape_direction(observer: &AgentState, neighbor: &Neighbor) -> Vec2 {
    (observer.position - neighbor.raw)
        .normalized()
        .unwrap_or_else(|| {
            let turn = (splitmix64(observer.ordinal as u64) >> 11) as f64 / (1u64 << 53) as f64;
            Vec2::new(1.0, 0.0).rotated(turn * TAU)
        })
}

/// Velocity command for one agent.
///
/// Neighbour terms are summed nearest first (ties broken by coordinates), so
/// the result does not depend on the order of `neighbors.entries`.
pub fn velocity_command(
    observer: &AgentState,
    target: &DestinationLine,
    neighbors: &NeighborView,
    gains: &ControllerGains,
    params: &AgentParams,
) -> Vec2 {
    let xi = observer.filtered_position(params.l);
    let attraction = saturate(line_error(xi, target) * gains.k1, params.v_m);

    let mut terms: Vec<(f64, &Neighbor)> = neighbors
        .entries
        .iter()
        .map(|n| (xi.distance(n.filtered), n))
        .collect();
    terms.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.filtered.x.total_cmp(&b.1.filtered.x))
            .then_with(|| a.1.filtered.y.total_cmp(&b.1.filtered.y))
    });

    let guard = gains.barrier.singularity_guard();
    if let Some((_, nearest)) = terms.first() {
        if terms[0].0 <= guard {
            return escape_direction(observer, nearest) * params.v_m;
        }
    }

    let mut repulsion = Vec2::ZERO;
    for (dist, n) in terms {
        let b = barrier_gain_bij(dist, &gains.barrier).expect("distance above guard");
        repulsion += (xi - n.filtered) * b;
    }
    -saturate(attraction - repulsion, params.v_m)
}

/// `‖v‖ < eps_a` and the raw position is within `eps_d` of the line.
pub fn arrival_check(
    state: &AgentState,
    target: &DestinationLine,
    gains: &ControllerGains,
) -> bool {
    state.velocity.norm() < gains.eps_a && line_error(state.position, target).norm() <= gains.eps_d
}
