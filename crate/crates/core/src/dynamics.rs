//! First-order-lag velocity model and its exact zero-order-hold discretization.
//!
//! Each multicopter obeys `ṗ = v`, `v̇ = −l·(v − v_c)`. With `v_c` held constant
//! over a step the solution is closed form, so the integrator adds no error of
//! its own: the filtered position `ξ = p + v/l` advances by exactly `v_c·dt`.

use serde::{Deserialize, Serialize};

use crate::controller::Route;
use crate::error::ValidationError;
use crate::math::Vec2;

/// Kinematic and sensing envelope of a multicopter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Velocity-loop gain, 1/s.
    pub l: f64,
    /// Maximum speed, m/s.
    pub v_m: f64,
    /// Safety radius, m.
    pub r_s: f64,
    /// Avoidance radius, m.
    pub r_a: f64,
    /// Detection radius, m.
    pub r_d: f64,
    /// Physical radius of the airframe, m.
    pub physical_radius: f64,
}

impl AgentParams {
    /// Fills the detection and physical radii from the required margins:
    /// `r_d` is twice its lower bound, the airframe gets half of the room left
    /// inside the safety radius.
    pub fn with_defaults(r_s: f64, r_a: f64, v_m: f64, l: f64) -> Self {
        AgentParams {
            l,
            v_m,
            r_s,
            r_a,
            r_d: Self::default_r_d(r_s, r_a, v_m, l),
            physical_radius: Self::default_physical_radius(r_s, v_m, l),
        }
    }

    pub fn default_r_d(r_s: f64, r_a: f64, v_m: f64, l: f64) -> f64 {
        2.0 * (r_s + r_a + 2.0 * v_m / l)
    }

    pub fn default_physical_radius(r_s: f64, v_m: f64, l: f64) -> f64 {
        (0.5 * (r_s - v_m / (2.0 * l))).max(0.0)
    }

    /// Largest gap between position and filtered position, `v_m / l`.
    pub fn lead(&self) -> f64 {
        self.v_m / self.l
    }

    /// Checks the radius ordering and detection margin for a homogeneous fleet.
    pub fn validate(&self) -> Result<(), ValidationError> {
        for (name, value) in [
            ("l", self.l),
            ("v_m", self.v_m),
            ("r_s", self.r_s),
            ("r_a", self.r_a),
            ("r_d", self.r_d),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ValidationError::NotPositive { name, value });
            }
        }
        if !(self.physical_radius.is_finite() && self.physical_radius >= 0.0) {
            return Err(ValidationError::NotPositive {
                name: "physical_radius",
                value: self.physical_radius,
            });
        }
        if self.r_a <= self.r_s {
            return Err(ValidationError::AvoidanceRadius {
                r_s: self.r_s,
                r_a: self.r_a,
            });
        }
        let need = self.physical_radius + self.v_m / (2.0 * self.l);
        if self.r_s <= need {
            return Err(ValidationError::SafetyMargin {
                r_s: self.r_s,
                need,
            });
        }
        let need = self.r_s + self.r_a + 2.0 * self.lead();
        if self.r_d <= need {
            return Err(ValidationError::DetectionRadius {
                r_d: self.r_d,
                need,
            });
        }
        Ok(())
    }
}

/// State of one multicopter.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// Spawn ordinal; identifies the agent in traces, never seen by the controller.
    pub ordinal: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Cleared once the agent has arrived at the last line of its route.
    pub active: bool,
    pub route: Route,
}

impl AgentState {
    pub fn at_rest(ordinal: u32, position: Vec2, route: Route) -> Self {
        AgentState {
            ordinal,
            position,
            velocity: Vec2::ZERO,
            active: true,
            route,
        }
    }

    /// `ξ = p + v / l`.
    #[inline]
    pub fn filtered_position(&self, l: f64) -> Vec2 {
        self.position + self.velocity / l
    }
}

/// Advances `state` by `dt` with `v_cmd` held constant.
pub fn step(state: &AgentState, v_cmd: Vec2, l: f64, dt: f64) -> AgentState {
    debug_assert!(dt > 0.0 && l > 0.0);
    let decay = (-l * dt).exp();
    // 1 - e^{-l·dt}, accurate for small l·dt.
    let rise = -(-l * dt).exp_m1();
    let dv = state.velocity - v_cmd;
    AgentState {
        position: state.position + v_cmd * dt + dv * (rise / l),
        velocity: v_cmd + dv * decay,
        ..state.clone()
    }
}

/// One sampled instant of a two-agent trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub tick: u64,
    pub p_i: Vec2,
    pub v_i: Vec2,
    pub p_j: Vec2,
    pub v_j: Vec2,
}

/// First tick at which `‖p̃‖ ≥ ‖ξ̃‖ − margin` failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub tick: u64,
    pub position_dist: f64,
    pub filtered_dist: f64,
    pub margin: f64,
}

impl BoundViolation {
    /// How far `‖p̃‖` fell below `‖ξ̃‖ − margin`.
    pub fn excess(&self) -> f64 {
        self.filtered_dist - self.margin - self.position_dist
    }
}

/// Rounding slack granted to the position/filtered-position comparison.
pub const BOUND_SLACK: f64 = 1e-12;

/// Tests `‖p̃_ij‖ ≥ ‖ξ̃_ij‖ − margin` at a single instant.
pub fn filtered_error_bound_holds(
    sample: &PairSample,
    l_i: f64,
    l_j: f64,
    margin: f64,
) -> Result<(), BoundViolation> {
    let p_dist = sample.p_i.distance(sample.p_j);
    let xi_i = sample.p_i + sample.v_i / l_i;
    let xi_j = sample.p_j + sample.v_j / l_j;
    let xi_dist = xi_i.distance(xi_j);
    if p_dist >= xi_dist - margin - BOUND_SLACK * xi_dist.max(1.0) {
        Ok(())
    } else {
        Err(BoundViolation {
            tick: sample.tick,
            position_dist: p_dist,
            filtered_dist: xi_dist,
            margin,
        })
    }
}

/// Checks the position/filtered-position bound over a sampled trajectory and
/// reports the first violating tick.
///
/// `margin` is usually [`fleet_lead`] (the largest `v_m/l` in the fleet). That
/// margin only covers pairs closing on each other; for pairs separating at
/// speed the guaranteed margin is [`pair_lead`].
pub fn filtered_error_bound_check(
    samples: &[PairSample],
    l_i: f64,
    l_j: f64,
    margin: f64,
) -> Result<(), BoundViolation> {
    samples
        .iter()
        .try_for_each(|s| filtered_error_bound_holds(s, l_i, l_j, margin))
}

/// `max_i v_m,i / l_i` over a fleet.
pub fn fleet_lead<'a>(params: impl IntoIterator<Item = &'a AgentParams>) -> f64 {
    params
        .into_iter()
        .map(AgentParams::lead)
        .fold(0.0, f64::max)
}

/// `v_m,i/l_i + v_m,j/l_j`: the largest possible `‖ξ̃ − p̃‖` for one pair.
pub fn pair_lead(a: &AgentParams, b: &AgentParams) -> f64 {
    a.lead() + b.lead()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::DestinationLine;
    use crate::math::saturate;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn route() -> Route {
        Route::new(vec![
            DestinationLine::new(Vec2::ZERO, Vec2::new(0.0, 1.0)).unwrap()
        ])
        .unwrap()
    }

    fn state(p: Vec2, v: Vec2) -> AgentState {
        AgentState {
            ordinal: 0,
            position: p,
            velocity: v,
            active: true,
            route: route(),
        }
    }

    #[test]
    fn equilibrium_velocity_is_kept() {
        let v = Vec2::new(3.0, -4.0);
        let s = step(&state(Vec2::new(1.0, 2.0), v), v, 5.0, 0.37);
        assert_eq!(s.velocity, v);
        assert!((s.position - (Vec2::new(1.0, 2.0) + v * 0.37)).norm() < 1e-14);
    }

    #[test]
    fn long_step_settles_at_lead_distance() {
        let s = step(
            &state(Vec2::ZERO, Vec2::new(1.0, 0.0)),
            Vec2::ZERO,
            5.0,
            100.0,
        );
        assert!(s.velocity.norm() < 1e-200);
        assert!((s.position - Vec2::new(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn exact_discretization_example() {
        let s = step(
            &state(Vec2::ZERO, Vec2::ZERO),
            Vec2::new(20.0, 0.0),
            5.0,
            0.01,
        );
        let expect = 20.0 * (1.0 - (-0.05f64).exp());
        assert!((s.velocity.x - expect).abs() < 1e-13);
        assert!((s.velocity.x - 0.9754).abs() < 1e-4);
        assert_eq!(s.velocity.y, 0.0);
    }

    #[test]
    fn halving_dt_reproduces_the_trajectory() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let l = 5.0;
        let dt = 0.02;
        let mut coarse = state(Vec2::new(10.0, -3.0), Vec2::new(2.0, 1.0));
        let mut fine = coarse.clone();
        for _ in 0..500 {
            let cmd = saturate(
                Vec2::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)),
                20.0,
            );
            coarse = step(&coarse, cmd, l, dt);
            fine = step(&fine, cmd, l, dt / 2.0);
            fine = step(&fine, cmd, l, dt / 2.0);
            let scale = coarse.position.norm().max(1.0);
            assert!((coarse.position - fine.position).norm() < 1e-9 * scale);
            assert!((coarse.velocity - fine.velocity).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn params_validation_names_the_violated_condition() {
        let ok = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
        assert!(ok.validate().is_ok());
        assert!((ok.r_d - 66.0).abs() < 1e-12);

        let p = AgentParams { r_d: 20.0, ..ok };
        match p.validate() {
            Err(ValidationError::DetectionRadius { need, .. }) => {
                assert!((need - 33.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let p = AgentParams { r_a: 10.0, ..ok };
        assert!(matches!(
            p.validate(),
            Err(ValidationError::AvoidanceRadius { .. })
        ));
        let p = AgentParams {
            physical_radius: 9.0,
            ..ok
        };
        assert!(matches!(
            p.validate(),
            Err(ValidationError::SafetyMargin { .. })
        ));
        let p = AgentParams { l: 0.0, ..ok };
        assert!(matches!(
            p.validate(),
            Err(ValidationError::NotPositive { name: "l", .. })
        ));
    }

    #[test]
    fn bound_at_rest_has_full_slack() {
        let s = PairSample {
            tick: 0,
            p_i: Vec2::ZERO,
            v_i: Vec2::ZERO,
            p_j: Vec2::new(30.0, 0.0),
            v_j: Vec2::ZERO,
        };
        assert!(filtered_error_bound_check(&[s], 5.0, 5.0, 4.0).is_ok());
        // Equal distances: holds even with zero margin.
        assert!(filtered_error_bound_check(&[s], 5.0, 5.0, 0.0).is_ok());
    }

    #[test]
    fn bound_closing_head_on_at_max_speed() {
        // Filtered positions lead toward each other, so ‖ξ̃‖ = ‖p̃‖ − 2·v_m/l.
        let s = PairSample {
            tick: 0,
            p_i: Vec2::ZERO,
            v_i: Vec2::new(20.0, 0.0),
            p_j: Vec2::new(30.0, 0.0),
            v_j: Vec2::new(-20.0, 0.0),
        };
        let xi = (s.p_i + s.v_i / 5.0).distance(s.p_j + s.v_j / 5.0);
        assert!((xi - (30.0 - 8.0)).abs() < 1e-12);
        assert!(filtered_error_bound_check(&[s], 5.0, 5.0, 4.0).is_ok());
    }

    #[test]
    fn bound_separating_at_max_speed_needs_the_pair_margin() {
        // Receding pair: ‖ξ̃‖ = ‖p̃‖ + 2·v_m/l, which breaks the single-lead
        // margin and saturates the pairwise one.
        let s = PairSample {
            tick: 17,
            p_i: Vec2::ZERO,
            v_i: Vec2::new(-20.0, 0.0),
            p_j: Vec2::new(30.0, 0.0),
            v_j: Vec2::new(20.0, 0.0),
        };
        let params = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
        let err = filtered_error_bound_check(&[s], 5.0, 5.0, fleet_lead([&params])).unwrap_err();
        assert_eq!(err.tick, 17);
        assert!((err.excess() - 4.0).abs() < 1e-12);
        assert!(filtered_error_bound_check(&[s], 5.0, 5.0, pair_lead(&params, &params)).is_ok());
    }

    #[test]
    fn random_trajectories_respect_the_pair_margin() {
        let params = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
        let margin = pair_lead(&params, &params);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut a = state(Vec2::new(rng.gen_range(-50.0..50.0), 0.0), Vec2::ZERO);
            let mut b = state(Vec2::new(0.0, rng.gen_range(-50.0..50.0)), Vec2::ZERO);
            let mut samples = Vec::with_capacity(1000);
            for tick in 0..1000 {
                let mut cmd = || {
                    saturate(
                        Vec2::new(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0)),
                        20.0,
                    )
                };
                a = step(&a, cmd(), params.l, 0.01);
                b = step(&b, cmd(), params.l, 0.01);
                samples.push(PairSample {
                    tick,
                    p_i: a.position,
                    v_i: a.velocity,
                    p_j: b.position,
                    v_j: b.velocity,
                });
            }
            assert!(filtered_error_bound_check(&samples, params.l, params.l, margin).is_ok());
        }
    }

    proptest! {
        #[test]
        fn filtered_position_advances_by_command(
            px in -1e3..1e3f64, py in -1e3..1e3f64,
            vx in -20.0..20.0f64, vy in -20.0..20.0f64,
            cx in -20.0..20.0f64, cy in -20.0..20.0f64,
            l in 0.5..10.0f64, dt in 1e-4..0.1f64,
        ) {
            let s = state(Vec2::new(px, py), Vec2::new(vx, vy));
            let cmd = Vec2::new(cx, cy);
            let next = step(&s, cmd, l, dt);
            let moved = next.filtered_position(l) - s.filtered_position(l);
            let expect = cmd * dt;
            let scale = s.filtered_position(l).norm().max(1.0);
            prop_assert!((moved - expect).norm() <= 1e-10 * scale);
        }

        #[test]
        fn speed_stays_in_the_ball(
            vx in -1.0..1.0f64, vy in -1.0..1.0f64,
            cx in -1.0..1.0f64, cy in -1.0..1.0f64,
            dt in 1e-4..1.0f64,
        ) {
            let v_m = 20.0;
            let v = saturate(Vec2::new(vx, vy) * v_m, v_m);
            let c = saturate(Vec2::new(cx, cy) * v_m, v_m);
            let next = step(&state(Vec2::ZERO, v), c, 5.0, dt);
            prop_assert!(next.velocity.norm() <= v_m * (1.0 + 1e-15));
        }
    }
}
