//! Attraction and repulsion potentials.
//!
//! The attraction toward a destination line is the line integral of the
//! saturated error field from the origin to the error vector. The field is a
//! radial gradient, so the integral is path independent and has the closed
//! form used in [`lyapunov_line_attract`].
//!
//! The pairwise barrier is a function of the filtered distance `d` only:
//!
//! ```text
//! V_m(d) = k2 · σ_m(d) / ((1 + ε)·d − 2·r_s·s(d / (2·r_s), ε_s))
//! ```
//!
//! where `σ_m` cuts off between `2·r_s` and `r_a + r_s`. The repulsion gain
//! is `b(d) = −V_m'(d) / d`.

use serde::{Deserialize, Serialize};

use crate::controller::{line_error, ControllerGains};
use crate::dynamics::{AgentParams, AgentState};
use crate::error::{DomainError, ValidationError};
use crate::math::{blend_s, blend_s_prime, sigma, sigma_prime, SigmaParams, Vec2};

/// Distances at or below `SINGULARITY_GUARD · r_s` are treated as coincident.
pub const SINGULARITY_GUARD: f64 = 1e-9;

/// Parameters of the line attraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttractorParams {
    /// Proportional gain, 1/s.
    pub k1: f64,
    /// Speed limit, m/s.
    pub v_m: f64,
}

impl AttractorParams {
    pub fn new(k1: f64, v_m: f64) -> Result<Self, ValidationError> {
        positive("k1", k1)?;
        positive("v_m", v_m)?;
        Ok(AttractorParams { k1, v_m })
    }
}

/// Parameters of the pairwise barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierParams {
    pub k2: f64,
    pub eps: f64,
    pub eps_s: f64,
    pub r_s: f64,
    pub r_a: f64,
}

impl BarrierParams {
    pub const DEFAULT_EPS: f64 = 0.01;
    pub const DEFAULT_EPS_S: f64 = 0.1;

    /// Default barrier scale `40·ε·r_s²·v_m`. With it the repulsion term
    /// `b·d` exceeds `v_m` well before the pair reaches `2·r_s`.
    pub fn default_k2(eps: f64, r_s: f64, v_m: f64) -> f64 {
        40.0 * eps * r_s * r_s * v_m
    }

    pub fn with_defaults(r_s: f64, r_a: f64, v_m: f64) -> Self {
        BarrierParams {
            k2: Self::default_k2(Self::DEFAULT_EPS, r_s, v_m),
            eps: Self::DEFAULT_EPS,
            eps_s: Self::DEFAULT_EPS_S,
            r_s,
            r_a,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        positive("k2", self.k2)?;
        positive("eps", self.eps)?;
        positive("r_s", self.r_s)?;
        positive("r_a", self.r_a)?;
        if !(self.eps_s > 0.0 && self.eps_s < 1.0) {
            return Err(ValidationError::BlendEps(self.eps_s));
        }
        if self.r_a <= self.r_s {
            return Err(ValidationError::AvoidanceRadius {
                r_s: self.r_s,
                r_a: self.r_a,
            });
        }
        Ok(())
    }

    /// Cutoff of the barrier: 1 inside `2·r_s`, 0 beyond `r_a + r_s`.
    pub fn sigma_m(&self) -> SigmaParams {
        SigmaParams::new(2.0 * self.r_s, self.r_a + self.r_s)
            .expect("validated barrier params give 0 < 2·r_s < r_a + r_s")
    }

    /// Distance beyond which the barrier and its gain vanish.
    pub fn reach(&self) -> f64 {
        self.r_a + self.r_s
    }

    pub fn singularity_guard(&self) -> f64 {
        SINGULARITY_GUARD * self.r_s
    }

    fn check_dist(&self, dist: f64) -> Result<(), DomainError> {
        if !dist.is_finite() {
            return Err(DomainError::NonFinite {
                what: "pair distance",
            });
        }
        let guard = self.singularity_guard();
        if dist <= guard {
            return Err(DomainError::Singular { dist, guard });
        }
        Ok(())
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ValidationError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ValidationError::NotPositive { name, value })
    }
}

/// Closed-form line integral of `sat(k1·x, v_m)` from the origin to `xi_err`.
pub fn lyapunov_line_attract(xi_err: Vec2, params: AttractorParams) -> f64 {
    let r = xi_err.norm();
    let knee = params.v_m / params.k1;
    if r <= knee {
        0.5 * params.k1 * r * r
    } else {
        params.v_m * r - 0.5 * params.v_m * knee
    }
}

/// Denominator of the barrier, `(1 + ε)·d − 2·r_s·s(d/(2·r_s))`, and its derivative.
fn barrier_denominator(dist: f64, p: &BarrierParams) -> (f64, f64) {
    let two_rs = 2.0 * p.r_s;
    let x = dist / two_rs;
    let den = (1.0 + p.eps) * dist - two_rs * blend_s(x, p.eps_s);
    let den_prime = (1.0 + p.eps) - blend_s_prime(x, p.eps_s);
    (den, den_prime)
}

/// Pairwise barrier value at filtered distance `dist`.
pub fn barrier_value(dist: f64, params: &BarrierParams) -> Result<f64, DomainError> {
    params.check_dist(dist)?;
    if dist >= params.reach() {
        return Ok(0.0);
    }
    let (den, _) = barrier_denominator(dist, params);
    Ok(params.k2 * sigma(dist, params.sigma_m()) / den)
}

/// Repulsion gain `−V_m'(d)/d`, computed by the chain rule.
pub fn barrier_gain_bij(dist: f64, params: &BarrierParams) -> Result<f64, DomainError> {
    params.check_dist(dist)?;
    if dist >= params.reach() {
        return Ok(0.0);
    }
    let sm = params.sigma_m();
    let (den, den_prime) = barrier_denominator(dist, params);
    let s = sigma(dist, sm);
    let s_prime = sigma_prime(dist, sm);
    let dv = params.k2 * (s_prime * den - s * den_prime) / (den * den);
    // -dv is nonnegative analytically; clamp the last-ulp noise near the cutoff.
    Ok((-dv / dist).max(0.0))
}

/// Per-agent share of the composite Lyapunov function: the agent's line
/// attraction plus half of each pairwise barrier it takes part in.
///
/// Inactive agents contribute nothing and are ignored as partners.
pub fn v1_contributions(
    states: &[AgentState],
    params: &AgentParams,
    gains: &ControllerGains,
) -> Vec<f64> {
    let attractor = AttractorParams {
        k1: gains.k1,
        v_m: params.v_m,
    };
    let filtered: Vec<Vec2> = states
        .iter()
        .map(|s| s.filtered_position(params.l))
        .collect();
    let reach = gains.barrier.reach();
    let mut out = vec![0.0; states.len()];
    for (i, state) in states.iter().enumerate() {
        if !state.active {
            continue;
        }
        let target = state.route.current();
        out[i] += lyapunov_line_attract(line_error(filtered[i], target), attractor);
        for j in (i + 1)..states.len() {
            if !states[j].active {
                continue;
            }
            let d = filtered[i].distance(filtered[j]);
            if d >= reach {
                continue;
            }
            // Coincident pairs sit on the singularity; saturate at the guard.
            let d = d.max(gains.barrier.singularity_guard() * 2.0);
            let v = barrier_value(d, &gains.barrier).expect("guarded distance");
            out[i] += 0.5 * v;
            out[j] += 0.5 * v;
        }
    }
    out
}

/// Composite Lyapunov function over the active agents.
pub fn composite_v1(states: &[AgentState], params: &AgentParams, gains: &ControllerGains) -> f64 {
    v1_contributions(states, params, gains)
        .iter()
        .fold(0.0, |acc, c| acc + c)
}
