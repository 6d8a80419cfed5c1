//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use freeflight_core::math::{blend_breakpoints, saturate};
use freeflight_core::sim::{BoundBreach, VehicleSpec};
use freeflight_core::trace::TraceWriter;
use freeflight_core::{
    barrier_gain_bij, barrier_value, lyapunov_line_attract, run, run_collect, AgentParams,
    AttractorParams, BarrierParams, DestinationLine, EventKind, RunOutput, ScenarioConfig,
    ScenarioKind, Vec2,
};

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

/// Aggregate of the position/filtered-position bound over every run.
#[derive(Default)]
struct BoundTally {
    runs: usize,
    fleet_violations: u64,
    pair_violations: u64,
    max_excess: Option<f64>,
    first: Option<(String, BoundBreach)>,
    first_pair: Option<(String, BoundBreach)>,
}

impl BoundTally {
    fn add(&mut self, label: &str, out: &RunOutput) {
        self.runs += 1;
        let s = &out.summary;
        self.fleet_violations += s.filtered_bound_violations;
        self.pair_violations += s.filtered_bound_violations_pair_margin;
        if let Some(e) = s.max_filtered_bound_excess_m {
            self.max_excess = Some(self.max_excess.map_or(e, |m: f64| m.max(e)));
        }
        if self.first.is_none() {
            self.first = out.first_bound_breach.map(|b| (label.to_string(), b));
        }
        if self.first_pair.is_none() {
            self.first_pair = out.first_pair_bound_breach.map(|b| (label.to_string(), b));
        }
    }
}

fn square_runs() -> Vec<(u64, RunOutput, f64)> {
    SEEDS
        .iter()
        .map(|&seed| {
            let t = Instant::now();
            let out =
                run(ScenarioConfig::reference_square(40, seed), 1, |_| {}).expect("valid scenario");
            (seed, out, t.elapsed().as_secs_f64())
        })
        .collect()
}

fn criterion_1(runs: &[(u64, RunOutput, f64)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, out, secs) in runs {
        let s = &out.summary;
        let floor = s.safety_floor_m;
        let tol_depth = 20.0 * 0.01;
        let bad_pairs = out
            .compliant_pair_min
            .iter()
            .filter(|(_, d)| *d <= floor)
            .count();
        let deep = out
            .episodes
            .iter()
            .filter(|e| e.depth(floor) > tol_depth || e.ticks > 2)
            .count();
        let ok = s.safety_violations_in_flight == 0 && deep == 0 && *secs < 60.0;
        pass &= ok;
        parts.push(format!(
            "seed {seed}: min compliant {:.3} m, {} pairs <= 20 m, {} out-of-tolerance episodes, {} spawn-induced, {:.2} s",
            s.min_compliant_filtered_dist_m.unwrap_or(f64::INFINITY),
            bad_pairs,
            deep,
            s.safety_violations_spawn_induced,
            secs
        ));
    }
    Outcome {
        id: 1,
        title: "safety at reference parameters",
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_2(runs: &[(u64, RunOutput, f64)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, out, _) in runs {
        let s = &out.summary;
        let missing = s.arrival_times_s.iter().filter(|t| t.is_none()).count();
        let last = s
            .arrival_times_s
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max);
        pass &= missing == 0 && s.agents_spawned == 40;
        parts.push(format!(
            "seed {seed}: {}/{} arrived, last at {last:.2} s",
            s.agents_arrived, s.agents_spawned
        ));
    }
    Outcome {
        id: 2,
        title: "convergence to destination lines",
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_3(bounds: &mut BoundTally) -> Outcome {
    let cfg = ScenarioConfig::lab_octet();
    let floor = 2.0 * cfg.params.r_s;
    let out = run(cfg, 1, |_| {}).expect("valid scenario");
    bounds.add("octet", &out);
    let s = &out.summary;
    let last = s
        .arrival_times_s
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    let min = s.global_min_filtered_dist_m.unwrap_or(f64::INFINITY);
    let pass = s.agents_spawned == 8
        && s.arrival_times_s
            .iter()
            .all(|t| t.is_some_and(|t| t <= 120.0))
        && s.safety_violations_in_flight == 0
        && s.safety_violations_spawn_induced == 0
        && min > floor;
    Outcome {
        id: 3,
        title: "lab-scale octet",
        pass,
        detail: format!(
            "{}/8 arrived, last at {last:.3} s, min filtered distance {min:.4} m (floor {floor} m)",
            s.agents_arrived
        ),
    }
}

fn criterion_4(bounds: &mut BoundTally) -> Outcome {
    let cfg = ScenarioConfig::conflict_pair();
    let floor = 2.0 * cfg.params.r_s;
    let initial = cfg.separation;
    let (trace, out) = run_collect(cfg, 1).expect("valid scenario");
    bounds.add("conflict", &out);
    let series: Vec<f64> = std::iter::once(initial)
        .chain(
            trace
                .iter()
                .filter(|r| r.agent == 0)
                .filter_map(|r| r.min_neighbor_dist),
        )
        .collect();
    let mut recovery_ticks = 0;
    let mut monotone = true;
    let mut cleared = false;
    for w in series.windows(2) {
        if w[0] > floor {
            cleared = true;
            break;
        }
        recovery_ticks += 1;
        if w[1] <= w[0] {
            monotone = false;
        }
    }
    let s = &out.summary;
    let spawn_events = out
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Assumption2ViolationAtSpawn)
        .count();
    let pass = monotone
        && cleared
        && s.agents_arrived == 2
        && s.safety_violations_in_flight == 0
        && spawn_events == 1;
    Outcome {
        id: 4,
        title: "recovery from inside the safety area",
        pass,
        detail: format!(
            "start {initial} m, cleared {floor} m after {recovery_ticks} ticks, strictly increasing: {monotone}, arrivals {:?}, spawn-induced events {spawn_events}",
            s.arrival_times_s
        ),
    }
}

fn criterion_5(runs: &[(u64, RunOutput, f64)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, out, _) in runs {
        let changed: HashSet<u64> = out.population_changes.iter().copied().collect();
        let mut checked = 0u64;
        let mut breaches = 0u64;
        let mut worst = f64::NEG_INFINITY;
        for k in 1..out.v1_series.len() {
            if changed.contains(&(k as u64)) {
                continue;
            }
            let (before, after) = (out.v1_series[k - 1], out.v1_series[k]);
            let rise = (after - before) / (1.0 + before);
            worst = worst.max(rise);
            checked += 1;
            if after > before + 1e-6 * (1.0 + before) {
                breaches += 1;
            }
        }
        pass &= breaches == 0 && checked > 0;
        parts.push(format!("seed {seed}: {checked} tick pairs, {breaches} rises, largest relative change {worst:.3e}"));
    }
    Outcome {
        id: 5,
        title: "composite Lyapunov function nonincreasing",
        pass,
        detail: parts.join("; "),
    }
}

/// Adaptive Simpson on `[a, b]`.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Line integral of `sat(k1·x, v_m)` along the polyline through `points`.
fn path_integral(points: &[Vec2], params: AttractorParams, tol: f64) -> f64 {
    points
        .windows(2)
        .map(|seg| {
            let (from, to) = (seg[0], seg[1]);
            let dir = to - from;
            let f = |t: f64| saturate((from + dir * t) * params.k1, params.v_m).dot(dir);
            simpson(&f, 0.0, 1.0, tol)
        })
        .sum()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let y = Vec2::new(rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0));
        let params = AttractorParams {
            k1: rng.gen_range(0.05..10.0),
            v_m: rng.gen_range(0.1..40.0),
        };
        let closed = lyapunov_line_attract(y, params);
        let tol = 1e-10 * closed.max(1e-300);
        let straight = path_integral(&[Vec2::ZERO, y], params, tol);
        let corner = path_integral(&[Vec2::ZERO, Vec2::new(y.x, 0.0), y], params, tol);
        for q in [straight, corner] {
            worst = worst.max((q - closed).abs() / closed);
        }
    }
    Outcome {
        id: 6,
        title: "line-integral Lyapunov closed form vs quadrature",
        pass: worst <= 1e-6,
        detail: format!("1000 cases, straight and L-shaped paths, max relative error {worst:.3e}"),
    }
}

fn criterion_7() -> Outcome {
    let params = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
    let b = BarrierParams::with_defaults(params.r_s, params.r_a, params.v_m);
    let r_s = b.r_s;
    let (x1, x2) = blend_breakpoints(b.eps_s);
    let breakpoints = [2.0 * r_s * x1, 2.0 * r_s * x2, 2.0 * r_s, b.reach()];
    let h = 1e-6 * r_s;
    let (lo, hi) = (0.1 * r_s, 2.0 * (b.r_a + b.r_s));
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut worst_fd: f64 = 0.0;
    let mut nonzero_beyond = 0;
    let mut worst_inner: f64 = 0.0;
    let mut samples = 0;
    while samples < 1000 {
        let d: f64 = rng.gen_range(lo..hi);
        if breakpoints.iter().any(|bp| (d - bp).abs() < 1e-3) {
            continue;
        }
        samples += 1;
        let gain = barrier_gain_bij(d, &b).unwrap();
        if d >= b.reach() {
            if gain != 0.0 || barrier_value(d, &b).unwrap() != 0.0 {
                nonzero_beyond += 1;
            }
            continue;
        }
        let fd =
            (barrier_value(d + h, &b).unwrap() - barrier_value(d - h, &b).unwrap()) / (2.0 * h);
        let fd_gain = -fd / d;
        worst_fd = worst_fd.max((gain - fd_gain).abs() / gain.abs());
        if d < breakpoints[0] {
            let exact = b.k2 / (b.eps * d.powi(3));
            worst_inner = worst_inner.max((gain - exact).abs() / exact);
        }
    }
    let pass = worst_fd <= 1e-4 && nonzero_beyond == 0 && worst_inner <= 1e-12;
    Outcome {
        id: 7,
        title: "repulsion gain vs finite differences",
        pass,
        detail: format!(
            "max relative FD error {worst_fd:.3e}, inner-branch error {worst_inner:.3e}, nonzero beyond reach {nonzero_beyond}"
        ),
    }
}

fn describe_breach(b: &Option<(String, BoundBreach)>) -> String {
    match b {
        None => "none".into(),
        Some((label, b)) => format!(
            "{label} tick {} agents {:?}: |p~| = {:.4} < |xi~| - margin = {:.4} - {:.1}",
            b.tick, b.agents, b.position_dist, b.filtered_dist, b.margin
        ),
    }
}

fn criterion_8(bounds: &BoundTally) -> Outcome {
    Outcome {
        id: 8,
        title: "position error bounded below by filtered error minus max v_m/l",
        pass: bounds.fleet_violations == 0,
        detail: format!(
            "{} runs: {} pair-ticks violate it (largest excess {:.4} m, first: {}); with margin v_mi/l_i + v_mj/l_j: {} violations (first: {})",
            bounds.runs,
            bounds.fleet_violations,
            bounds.max_excess.unwrap_or(0.0),
            describe_breach(&bounds.first),
            bounds.pair_violations,
            describe_breach(&bounds.first_pair),
        ),
    }
}

/// Distance at which the repulsion exactly cancels a saturated attraction.
fn balance_distance(b: &BarrierParams, v_m: f64) -> f64 {
    let excess = |d: f64| barrier_gain_bij(d, b).unwrap() * d - v_m;
    let (mut lo, mut hi) = (2.0 * b.r_s, b.reach());
    assert!(excess(lo) > 0.0 && excess(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn saddle_config(seed: u64) -> ScenarioConfig {
    let params = AgentParams::with_defaults(10.0, 15.0, 20.0, 5.0);
    let mut cfg = ScenarioConfig::with_defaults(ScenarioKind::Custom, 250.0, params);
    cfg.seed = seed;
    let d = balance_distance(&cfg.gains.barrier, params.v_m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let which = rng.gen_range(0..2usize);
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let centre = 125.0 + rng.gen_range(-50.0..50.0);
    let y = 125.0;
    let east = DestinationLine::new(Vec2::new(250.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
    let west = DestinationLine::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
    let mut vehicles = vec![
        VehicleSpec {
            time: 0.0,
            position: Vec2::new(centre - 0.5 * d, y),
            velocity: Vec2::ZERO,
            route: vec![east],
        },
        VehicleSpec {
            time: 0.0,
            position: Vec2::new(centre + 0.5 * d, y),
            velocity: Vec2::ZERO,
            route: vec![west],
        },
    ];
    vehicles[which].position.y += sign * 1e-6 * params.r_s;
    cfg.vehicles = vehicles;
    cfg
}

fn criterion_9(bounds: &mut BoundTally) -> Outcome {
    let mut escaped = 0;
    let mut times = Vec::new();
    for seed in 0..10 {
        let out = run(saddle_config(seed), 1, |_| {}).expect("valid scenario");
        bounds.add(&format!("saddle seed {seed}"), &out);
        let s = &out.summary;
        let done = s
            .arrival_times_s
            .iter()
            .all(|t| t.is_some_and(|t| t <= 120.0));
        if done && s.safety_violations_in_flight == 0 {
            escaped += 1;
        }
        times.push(
            s.arrival_times_s
                .iter()
                .flatten()
                .copied()
                .fold(0.0, f64::max),
        );
    }
    let times: Vec<String> = times.iter().map(|t| format!("{t:.2}")).collect();
    Outcome {
        id: 9,
        title: "escape from the head-on balance point",
        pass: escaped == 10,
        detail: format!(
            "{escaped}/10 seeds with both agents arrived; last arrival per seed [{}] s",
            times.join(", ")
        ),
    }
}

fn trace_bytes(seed: u64) -> Vec<u8> {
    let mut w = TraceWriter::new(Vec::new()).unwrap();
    run(ScenarioConfig::reference_square(40, seed), 1, |r| {
        w.write(r).unwrap()
    })
    .unwrap();
    w.finish().unwrap()
}

fn criterion_10() -> Outcome {
    let a = trace_bytes(SEEDS[0]);
    let b = trace_bytes(SEEDS[0]);
    Outcome {
        id: 10,
        title: "deterministic trace",
        pass: a == b && !a.is_empty(),
        detail: format!(
            "two runs of seed {}: {} and {} bytes, identical: {}",
            SEEDS[0],
            a.len(),
            b.len(),
            a == b
        ),
    }
}

fn main() {
    let started = Instant::now();
    let mut bounds = BoundTally::default();
    let runs = square_runs();
    for (seed, out, _) in &runs {
        bounds.add(&format!("square seed {seed}"), out);
    }
    let mut outcomes = vec![criterion_1(&runs), criterion_2(&runs)];
    outcomes.push(criterion_3(&mut bounds));
    outcomes.push(criterion_4(&mut bounds));
    outcomes.push(criterion_5(&runs));
    outcomes.push(criterion_6());
    outcomes.push(criterion_7());
    outcomes.push(criterion_9(&mut bounds));
    outcomes.push(criterion_8(&bounds));
    outcomes.push(criterion_10());
    outcomes.sort_by_key(|o| o.id);

    let mut failed = 0;
    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {:>2}: {}: {}", o.id, o.title, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {} failed in {:.1} s",
        outcomes.len() - failed,
        failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
