//! Synchronous tick loop over a fleet.
//!
//! Every tick runs the same phases in the same order:
//!
//! 1. the airborne agents at the start of the tick form the snapshot;
//! 2. each agent's neighbour view and velocity command are computed from the
//!    snapshot only;
//! 3. every agent is stepped with its command held for `dt`;
//! 4. pairwise quantities are measured on the stepped states, then arrivals
//!    are checked and routes advanced (finished agents leave at the end of the
//!    tick);
//! 5. spawns due at the new time are placed;
//! 6. trace records and events are emitted.
//!
//! Tick `k` denotes the state at time `k·dt`; one call to [`World::tick`]
//! moves from `k` to `k + 1` and labels everything it emits with `k + 1`.

mod events;
pub mod scenario;

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::{
    advance_route, arrival_check, line_error, neighbor_set, velocity_command, Advance,
};
use crate::dynamics::{
    filtered_error_bound_holds, fleet_lead, pair_lead, step, AgentState, PairSample,
};
use crate::error::ValidationError;
use crate::math::Vec2;
use crate::potential::{barrier_value, composite_v1, lyapunov_line_attract, AttractorParams};
use crate::trace::{RunSummary, TraceRecord};

pub use events::{EventKind, SimEvent};
pub use scenario::{
    spawn_agent, Edge, EdgeChoice, Inflow, ScenarioConfig, ScenarioKind, SpawnBatch, VehicleSpec,
};

use scenario::{realize, spawn_plans, SpawnPlan};

/// A close approach of a compliant pair below `2·r_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub agents: (u32, u32),
    pub start_tick: u64,
    /// Ticks spent at or below `2·r_s`.
    pub ticks: u64,
    pub min_dist: f64,
    /// Exceeded the discrete-time tolerance.
    pub failed: bool,
}

impl Episode {
    pub fn depth(&self, floor: f64) -> f64 {
        floor - self.min_dist
    }
}

#[derive(Debug, Clone, Copy)]
struct PairRecord {
    compliant: bool,
    min_dist: f64,
    open: Option<Episode>,
}

/// First failure of the position/filtered-position bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundBreach {
    pub tick: u64,
    pub agents: (u32, u32),
    pub position_dist: f64,
    pub filtered_dist: f64,
    pub margin: f64,
}

/// Everything a run produces besides the streamed trace.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<SimEvent>,
    pub summary: RunSummary,
    /// Composite Lyapunov function at the end of every tick, index = tick.
    pub v1_series: Vec<f64>,
    /// Ticks in which an agent spawned, arrived or switched lines.
    pub population_changes: Vec<u64>,
    /// All sub-`2·r_s` episodes of compliant pairs, failed or not.
    pub episodes: Vec<Episode>,
    /// Smallest filtered distance reached by each compliant pair.
    pub compliant_pair_min: Vec<((u32, u32), f64)>,
    pub first_bound_breach: Option<BoundBreach>,
    pub first_pair_bound_breach: Option<BoundBreach>,
    /// Largest `|Δξ − v_c·dt| / max(1, ‖ξ‖)` seen over all steps.
    pub max_filtered_step_error: f64,
}

/// The simulated airspace.
#[derive(Clone)]
pub struct World {
    cfg: ScenarioConfig,
    tick: u64,
    rng: ChaCha8Rng,
    plans: Vec<SpawnPlan>,
    next_plan: usize,
    /// Airborne agents in spawn order.
    agents: Vec<AgentState>,
    spawned: u32,
    spawn_tick: Vec<u64>,
    arrival_time: Vec<Option<f64>>,
    pairs: HashMap<(u32, u32), PairRecord>,
    events: Vec<SimEvent>,
    episodes: Vec<Episode>,
    population_changes: Vec<u64>,
    v1_series: Vec<f64>,
    lead: f64,
    first_bound_breach: Option<BoundBreach>,
    first_pair_bound_breach: Option<BoundBreach>,
    bound_violations: u64,
    pair_bound_violations: u64,
    max_bound_excess: f64,
    max_filtered_step_error: f64,
    detection_gaps: u64,
    global_min: Option<f64>,
}

/// Output of one tick for the agents airborne during it.
#[derive(Debug, Clone, Default)]
pub struct TickReport {
    pub records: Vec<TraceRecord>,
}

impl World {
    /// Builds the world and places every agent due at time 0.
    pub fn new(cfg: ScenarioConfig) -> Result<Self, ValidationError> {
        cfg.validate()?;
        if let Some(w) = cfg.packing_warning() {
            log::warn!("{w}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let plans = spawn_plans(&cfg, &mut rng);
        let lead = fleet_lead([&cfg.params]);
        let mut world = World {
            cfg,
            tick: 0,
            rng,
            plans,
            next_plan: 0,
            agents: Vec::new(),
            spawned: 0,
            spawn_tick: Vec::new(),
            arrival_time: Vec::new(),
            pairs: HashMap::new(),
            events: Vec::new(),
            episodes: Vec::new(),
            population_changes: Vec::new(),
            v1_series: Vec::new(),
            lead,
            first_bound_breach: None,
            first_pair_bound_breach: None,
            bound_violations: 0,
            pair_bound_violations: 0,
            max_bound_excess: f64::NEG_INFINITY,
            max_filtered_step_error: 0.0,
            detection_gaps: 0,
            global_min: None,
        };
        let spawned = world.process_spawns()?;
        if spawned {
            world.population_changes.push(0);
        }
        world.v1_series.push(world.v1());
        Ok(world)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.dt
    }

    /// Agents currently in the air, in spawn order.
    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    /// Composite Lyapunov function of the airborne agents.
    pub fn v1(&self) -> f64 {
        composite_v1(&self.agents, &self.cfg.params, &self.cfg.gains)
    }

    fn safety_floor(&self) -> f64 {
        2.0 * self.cfg.params.r_s
    }

    fn push_event(&mut self, kind: EventKind, a: u32, b: Option<u32>, value: Option<f64>) {
        self.events.push(SimEvent {
            tick: self.tick,
            time: self.time(),
            kind,
            agent_a: a,
            agent_b: b,
            value,
        });
    }

    /// Places every agent due at or before the current tick. Returns whether any appeared.
    fn process_spawns(&mut self) -> Result<bool, ValidationError> {
        let mut any = false;
        while self.next_plan < self.plans.len() && self.plans[self.next_plan].tick <= self.tick {
            let plan = self.plans[self.next_plan].clone();
            self.next_plan += 1;
            let ordinal = self.spawned;
            let agent = realize(&plan, ordinal, self.cfg.side, &mut self.rng)
                .map_err(|e| ValidationError::Scenario(e.to_string()))?;
            self.spawned += 1;
            self.spawn_tick.push(self.tick);
            self.arrival_time.push(None);
            any = true;

            let l = self.cfg.params.l;
            let xi = agent.filtered_position(l);
            let floor = self.safety_floor();
            let mut nearest: Option<f64> = None;
            let mut conflicts = Vec::new();
            for other in &self.agents {
                let d = xi.distance(other.filtered_position(l));
                nearest = Some(nearest.map_or(d, |n: f64| n.min(d)));
                let compliant = d > floor;
                if !compliant {
                    conflicts.push((other.ordinal, d));
                }
                self.pairs.insert(
                    (other.ordinal, ordinal),
                    PairRecord {
                        compliant,
                        min_dist: d,
                        open: None,
                    },
                );
            }
            self.push_event(EventKind::Spawn, ordinal, None, nearest);
            for (other, d) in conflicts {
                log::debug!("agent {ordinal} spawned {d:.3} m from agent {other}");
                self.push_event(
                    EventKind::Assumption2ViolationAtSpawn,
                    ordinal,
                    Some(other),
                    Some(d),
                );
            }
            self.agents.push(agent);
        }
        Ok(any)
    }

    /// Advances one tick. Records are produced only when `sample` is set.
    pub fn tick(&mut self, sample: bool) -> TickReport {
        let params = self.cfg.params;
        let gains = self.cfg.gains;
        let dt = self.cfg.dt;
        let l = params.l;

        // Phases 1-2: commands from the start-of-tick snapshot.
        let commands: Vec<Vec2> = self
            .agents
            .iter()
            .map(|agent| {
                let view = neighbor_set(agent, &params, &self.agents);
                if view.out_of_detection > 0 {
                    self.detection_gaps += view.out_of_detection as u64;
                }
                velocity_command(agent, agent.route.current(), &view, &gains, &params)
            })
            .collect();

        // Phase 3: exact step under zero-order hold.
        for (agent, cmd) in self.agents.iter_mut().zip(&commands) {
            let before = agent.filtered_position(l);
            *agent = step(agent, *cmd, l, dt);
            let after = agent.filtered_position(l);
            let err = (after - before - *cmd * dt).norm() / before.norm().max(1.0);
            self.max_filtered_step_error = self.max_filtered_step_error.max(err);
        }
        self.tick += 1;

        // Phase 4a: pairwise measurements on the stepped states.
        let n = self.agents.len();
        let filtered: Vec<Vec2> = self.agents.iter().map(|a| a.filtered_position(l)).collect();
        let mut min_dist: Vec<Option<f64>> = vec![None; n];
        let mut contrib = vec![0.0; n];
        let attractor = AttractorParams {
            k1: gains.k1,
            v_m: params.v_m,
        };
        let reach = gains.barrier.reach();
        let floor = self.safety_floor();
        let tolerance_depth = params.v_m * dt;
        for i in 0..n {
            contrib[i] += lyapunov_line_attract(
                line_error(filtered[i], self.agents[i].route.current()),
                attractor,
            );
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let d = filtered[i].distance(filtered[j]);
                min_dist[i] = Some(min_dist[i].map_or(d, |m| m.min(d)));
                min_dist[j] = Some(min_dist[j].map_or(d, |m| m.min(d)));
                self.global_min = Some(self.global_min.map_or(d, |m| m.min(d)));
                if d < reach {
                    let v = barrier_value(
                        d.max(2.0 * gains.barrier.singularity_guard()),
                        &gains.barrier,
                    )
                    .expect("guarded distance");
                    contrib[i] += 0.5 * v;
                    contrib[j] += 0.5 * v;
                }
                let key = (self.agents[i].ordinal, self.agents[j].ordinal);
                self.check_bounds(i, j, key);
                self.track_pair(key, d, floor, tolerance_depth);
            }
        }

        let line_dist: Vec<f64> = (0..n)
            .map(|i| line_error(filtered[i], self.agents[i].route.current()).norm())
            .collect();

        // Phase 4b: arrivals and route switches.
        let mut records = Vec::new();
        let mut population_changed = false;
        let mut finished = vec![false; n];
        let mut route_events = Vec::new();
        let now = self.time();
        for (i, agent) in self.agents.iter_mut().enumerate() {
            if !arrival_check(agent, agent.route.current(), &gains) {
                continue;
            }
            let remaining = line_error(agent.position, agent.route.current()).norm();
            match advance_route(&mut agent.route) {
                Advance::Switched(cursor) => {
                    route_events.push((EventKind::LineSwitch, agent.ordinal, cursor as f64));
                }
                Advance::Completed => {
                    finished[i] = true;
                    agent.active = false;
                    self.arrival_time[agent.ordinal as usize] = Some(now);
                    route_events.push((EventKind::Arrival, agent.ordinal, remaining));
                }
            }
            population_changed = true;
        }
        for (kind, ordinal, value) in route_events {
            self.push_event(kind, ordinal, None, Some(value));
        }

        // Phase 6 (records) uses the stepped states before retirement.
        if sample {
            let time = self.time();
            records.reserve(n);
            for i in 0..n {
                let a = &self.agents[i];
                records.push(TraceRecord {
                    tick: self.tick,
                    time,
                    agent: a.ordinal,
                    active: !finished[i],
                    position: a.position,
                    velocity: a.velocity,
                    filtered: filtered[i],
                    command: commands[i],
                    dist_to_line: line_dist[i],
                    min_neighbor_dist: min_dist[i],
                    v1_contribution: contrib[i],
                });
            }
        }

        // Retire finished agents; their pairs close.
        if finished.iter().any(|&f| f) {
            let leaving: Vec<u32> = (0..n)
                .filter(|&i| finished[i])
                .map(|i| self.agents[i].ordinal)
                .collect();
            for &ordinal in &leaving {
                self.close_pairs_of(ordinal);
            }
            let mut k = 0;
            self.agents.retain(|_| {
                let keep = !finished[k];
                k += 1;
                keep
            });
        }

        // Phase 5: spawns.
        match self.process_spawns() {
            Ok(spawned) => population_changed |= spawned,
            Err(e) => log::error!("spawn failed: {e}"),
        }

        if population_changed {
            self.population_changes.push(self.tick);
            self.v1_series.push(self.v1());
        } else {
            self.v1_series
                .push(contrib.iter().fold(0.0, |acc, c| acc + c));
        }
        TickReport { records }
    }

    fn check_bounds(&mut self, i: usize, j: usize, agents: (u32, u32)) {
        let (a, b) = (&self.agents[i], &self.agents[j]);
        let sample = PairSample {
            tick: self.tick,
            p_i: a.position,
            v_i: a.velocity,
            p_j: b.position,
            v_j: b.velocity,
        };
        let l = self.cfg.params.l;
        if let Err(v) = filtered_error_bound_holds(&sample, l, l, self.lead) {
            self.bound_violations += 1;
            self.max_bound_excess = self.max_bound_excess.max(v.excess());
            self.first_bound_breach.get_or_insert(BoundBreach {
                tick: v.tick,
                agents,
                position_dist: v.position_dist,
                filtered_dist: v.filtered_dist,
                margin: v.margin,
            });
        }
        let pair_margin = pair_lead(&self.cfg.params, &self.cfg.params);
        if let Err(v) = filtered_error_bound_holds(&sample, l, l, pair_margin) {
            self.pair_bound_violations += 1;
            self.first_pair_bound_breach.get_or_insert(BoundBreach {
                tick: v.tick,
                agents,
                position_dist: v.position_dist,
                filtered_dist: v.filtered_dist,
                margin: v.margin,
            });
        }
    }

    fn track_pair(&mut self, key: (u32, u32), d: f64, floor: f64, tolerance_depth: f64) {
        let tick = self.tick;
        let Some(rec) = self.pairs.get_mut(&key) else {
            debug_assert!(false, "pair {key:?} never registered");
            return;
        };
        rec.min_dist = rec.min_dist.min(d);
        if !rec.compliant {
            return;
        }
        let mut emit = None;
        if d <= floor {
            let ep = rec.open.get_or_insert(Episode {
                agents: key,
                start_tick: tick,
                ticks: 0,
                min_dist: d,
                failed: false,
            });
            ep.ticks += 1;
            ep.min_dist = ep.min_dist.min(d);
            if !ep.failed && (floor - ep.min_dist > tolerance_depth || ep.ticks > 2) {
                ep.failed = true;
                emit = Some((EventKind::SafetyViolation, ep.min_dist));
            }
        } else if let Some(ep) = rec.open.take() {
            if !ep.failed {
                emit = Some((EventKind::DiscretizationWarning, ep.min_dist));
            }
            self.episodes.push(ep);
        }
        if let Some((kind, value)) = emit {
            self.push_event(kind, key.0, Some(key.1), Some(value));
        }
    }

    fn close_pairs_of(&mut self, ordinal: u32) {
        let mut keys: Vec<(u32, u32)> = self
            .pairs
            .iter()
            .filter(|(k, r)| (k.0 == ordinal || k.1 == ordinal) && r.open.is_some())
            .map(|(k, _)| *k)
            .collect();
        keys.sort_unstable();
        for key in keys {
            self.close_episode(key);
        }
    }

    fn close_episode(&mut self, key: (u32, u32)) {
        if let Some(ep) = self.pairs.get_mut(&key).and_then(|r| r.open.take()) {
            if !ep.failed {
                self.push_event(
                    EventKind::DiscretizationWarning,
                    key.0,
                    Some(key.1),
                    Some(ep.min_dist),
                );
            }
            self.episodes.push(ep);
        }
    }

    /// Closes open episodes and assembles the run output.
    pub fn finish(mut self, trace_rows: u64, started: Instant) -> RunOutput {
        let mut open: Vec<(u32, u32)> = self
            .pairs
            .iter()
            .filter(|(_, r)| r.open.is_some())
            .map(|(k, _)| *k)
            .collect();
        open.sort_unstable();
        for key in open {
            self.close_episode(key);
        }
        let mut compliant_pair_min: Vec<((u32, u32), f64)> = self
            .pairs
            .iter()
            .filter(|(_, r)| r.compliant)
            .map(|(k, r)| (*k, r.min_dist))
            .collect();
        compliant_pair_min.sort_by_key(|(k, _)| *k);
        let min_compliant = compliant_pair_min.iter().map(|(_, d)| *d).reduce(f64::min);
        let count = |kind| self.events.iter().filter(|e| e.kind == kind).count() as u32;
        let summary = RunSummary {
            scenario: self.cfg.kind.to_string(),
            seed: self.cfg.seed,
            dt: self.cfg.dt,
            duration_s: self.cfg.duration,
            ticks: self.tick,
            agents_spawned: self.spawned,
            agents_arrived: self.arrival_time.iter().filter(|t| t.is_some()).count() as u32,
            arrival_times_s: self.arrival_time.clone(),
            spawn_times_s: self
                .spawn_tick
                .iter()
                .map(|&t| t as f64 * self.cfg.dt)
                .collect(),
            global_min_filtered_dist_m: self.global_min,
            min_compliant_filtered_dist_m: min_compliant,
            safety_floor_m: self.safety_floor(),
            safety_violations_in_flight: count(EventKind::SafetyViolation),
            safety_violations_spawn_induced: count(EventKind::Assumption2ViolationAtSpawn),
            discretization_warnings: count(EventKind::DiscretizationWarning),
            detection_gaps: self.detection_gaps,
            filtered_bound_violations: self.bound_violations,
            filtered_bound_violations_pair_margin: self.pair_bound_violations,
            max_filtered_bound_excess_m: self
                .max_bound_excess
                .is_finite()
                .then_some(self.max_bound_excess),
            final_v1: *self.v1_series.last().unwrap_or(&0.0),
            trace_rows,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        RunOutput {
            events: self.events,
            summary,
            v1_series: self.v1_series,
            population_changes: self.population_changes,
            episodes: self.episodes,
            compliant_pair_min,
            first_bound_breach: self.first_bound_breach,
            first_pair_bound_breach: self.first_pair_bound_breach,
            max_filtered_step_error: self.max_filtered_step_error,
        }
    }
}

/// Runs a scenario to its configured duration, streaming sampled trace
/// records to `sink`. Records are sampled every `sample_every` ticks.
pub fn run<F>(
    cfg: ScenarioConfig,
    sample_every: u64,
    mut sink: F,
) -> Result<RunOutput, ValidationError>
where
    F: FnMut(&TraceRecord),
{
    let started = Instant::now();
    let sample_every = sample_every.max(1);
    let ticks = cfg.ticks();
    let mut world = World::new(cfg)?;
    let mut rows = 0u64;
    for _ in 0..ticks {
        let sample = (world.tick_index() + 1) % sample_every == 0;
        let report = world.tick(sample);
        for r in &report.records {
            sink(r);
        }
        rows += report.records.len() as u64;
    }
    Ok(world.finish(rows, started))
}

/// Runs a scenario and keeps the whole trace in memory.
pub fn run_collect(
    cfg: ScenarioConfig,
    sample_every: u64,
) -> Result<(Vec<TraceRecord>, RunOutput), ValidationError> {
    let mut trace = Vec::new();
    let out = run(cfg, sample_every, |r| trace.push(r.clone()))?;
    Ok((trace, out))
}
