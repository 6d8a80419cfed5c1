//! Scenario files.
//!
//! A scenario file is a list of `[section]` headers each followed by
//! `key = value` lines. `#` starts a comment. Sections `[scenario]`,
//! `[fleet]`, `[gains]`, `[inflow]` and `[conflict]` may appear once;
//! `[spawn]` and `[vehicle]` may repeat. Vectors are comma separated.
//!
//! ```text
//! [scenario]
//! kind = dynamic_inflow_square
//! side = 250
//! seed = 1
//!
//! [fleet]
//! r_s = 10
//! r_a = 15
//! v_m = 20
//! l = 5
//! ```
//!
//! Omitted values take defaults derived from the given ones; every default
//! applied is logged and returned alongside the config.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::controller::{ControllerGains, DestinationLine};
use crate::dynamics::AgentParams;
use crate::error::ConfigError;
use crate::math::Vec2;
use crate::potential::BarrierParams;
use crate::sim::{EdgeChoice, Inflow, ScenarioConfig, ScenarioKind, SpawnBatch, VehicleSpec};

#[derive(Debug)]
struct Entry {
    line: usize,
    key: String,
    value: String,
    used: bool,
}

#[derive(Debug)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn lex(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: "unterminated section header".into(),
                })?
                .trim();
            if !KNOWN_SECTIONS.contains(&name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            if !REPEATABLE.contains(&name) && sections.iter().any(|s| s.name == name) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("section [{name}] appears twice"),
                });
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key or value".into(),
            });
        }
        let section = sections.last_mut().ok_or_else(|| ConfigError::Syntax {
            line,
            message: "key outside of any section".into(),
        })?;
        let repeatable = section.name == "vehicle" && key == "line";
        if !repeatable && section.entries.iter().any(|e| e.key == key) {
            return Err(ConfigError::Key {
                line,
                key: key.into(),
                message: "duplicate key".into(),
            });
        }
        section.entries.push(Entry {
            line,
            key: key.into(),
            value: value.into(),
            used: false,
        });
    }
    if sections.is_empty() {
        return Err(ConfigError::Empty);
    }
    Ok(sections)
}

const KNOWN_SECTIONS: [&str; 7] = [
    "scenario", "fleet", "gains", "inflow", "conflict", "spawn", "vehicle",
];
const REPEATABLE: [&str; 2] = ["spawn", "vehicle"];

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let e = self.entries.iter_mut().find(|e| e.key == key && !e.used)?;
        e.used = true;
        Some((e.line, e.value.clone()))
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, value)) => value.parse::<T>().map(Some).map_err(|e| ConfigError::Key {
                line,
                key: key.into(),
                message: e.to_string(),
            }),
        }
    }

    fn vector(&mut self, key: &str, len: usize) -> Result<Option<(usize, Vec<f64>)>, ConfigError> {
        let Some((line, value)) = self.take(key) else {
            return Ok(None);
        };
        let parts: Result<Vec<f64>, _> =
            value.split(',').map(|p| p.trim().parse::<f64>()).collect();
        match parts {
            Ok(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(Some((line, v))),
            Ok(_) => Err(ConfigError::Key {
                line,
                key: key.into(),
                message: format!("expected {len} finite comma-separated numbers"),
            }),
            Err(e) => Err(ConfigError::Key {
                line,
                key: key.into(),
                message: e.to_string(),
            }),
        }
    }

    fn finish(&self) -> Result<(), ConfigError> {
        match self.entries.iter().find(|e| !e.used) {
            Some(e) => Err(ConfigError::Key {
                line: e.line,
                key: e.key.clone(),
                message: format!("unknown key in [{}]", self.name),
            }),
            None => Ok(()),
        }
    }
}

fn required<T>(
    value: Option<T>,
    section: &'static str,
    key: &'static str,
) -> Result<T, ConfigError> {
    value.ok_or(ConfigError::Missing { section, key })
}

/// A parsed scenario and the defaults that were filled in.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: ScenarioConfig,
    pub defaults: Vec<String>,
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Parsed, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Parsed, ConfigError> {
    let mut sections = lex(text)?;
    let mut defaults = Vec::new();
    let mut note = |key: &str, value: f64| {
        let msg = format!("{key} = {value:?} (default)");
        log::info!("{msg}");
        defaults.push(msg);
    };

    let single = |name: &str, sections: &mut Vec<Section>| -> Section {
        match sections.iter().position(|s| s.name == name) {
            Some(i) => sections.remove(i),
            None => Section {
                name: name.into(),
                line: 0,
                entries: Vec::new(),
            },
        }
    };
    let mut scenario = single("scenario", &mut sections);
    let mut fleet = single("fleet", &mut sections);
    let mut gains_sec = single("gains", &mut sections);
    let mut inflow_sec = single("inflow", &mut sections);
    let mut conflict = single("conflict", &mut sections);

    let kind: ScenarioKind = required(scenario.parse("kind")?, "scenario", "kind")?;
    let side: f64 = required(scenario.parse("side")?, "scenario", "side")?;
    let duration = match scenario.parse("duration")? {
        Some(d) => d,
        None => {
            note("duration", ScenarioConfig::DEFAULT_DURATION);
            ScenarioConfig::DEFAULT_DURATION
        }
    };
    let dt = match scenario.parse("dt")? {
        Some(d) => d,
        None => {
            let d = ScenarioConfig::default_dt(kind);
            note("dt", d);
            d
        }
    };
    let seed: u64 = scenario.parse("seed")?.unwrap_or(0);

    let r_s: f64 = required(fleet.parse("r_s")?, "fleet", "r_s")?;
    let r_a: f64 = required(fleet.parse("r_a")?, "fleet", "r_a")?;
    let v_m: f64 = required(fleet.parse("v_m")?, "fleet", "v_m")?;
    let l: f64 = required(fleet.parse("l")?, "fleet", "l")?;
    let mut params = AgentParams::with_defaults(r_s, r_a, v_m, l);
    match fleet.parse("r_d")? {
        Some(v) => params.r_d = v,
        None => note("r_d", params.r_d),
    }
    match fleet.parse("physical_radius")? {
        Some(v) => params.physical_radius = v,
        None => note("physical_radius", params.physical_radius),
    }

    let eps: f64 = match gains_sec.parse("eps")? {
        Some(v) => v,
        None => {
            note("eps", BarrierParams::DEFAULT_EPS);
            BarrierParams::DEFAULT_EPS
        }
    };
    let eps_s: f64 = match gains_sec.parse("eps_s")? {
        Some(v) => v,
        None => {
            note("eps_s", BarrierParams::DEFAULT_EPS_S);
            BarrierParams::DEFAULT_EPS_S
        }
    };
    let k2: f64 = match gains_sec.parse("k2")? {
        Some(v) => v,
        None => {
            let v = BarrierParams::default_k2(eps, r_s, v_m);
            note("k2", v);
            v
        }
    };
    let eps_d: f64 = match gains_sec.parse("eps_d")? {
        Some(v) => v,
        None => {
            let v = ControllerGains::default_eps_d(side);
            note("eps_d", v);
            v
        }
    };
    let eps_a: f64 = match gains_sec.parse("eps_a")? {
        Some(v) => v,
        None => {
            let v = ControllerGains::default_eps_a(v_m);
            note("eps_a", v);
            v
        }
    };
    let k1: f64 = match gains_sec.parse("k1")? {
        Some(v) => v,
        None => {
            let v = ControllerGains::default_k1(v_m, eps_d);
            note("k1", v);
            v
        }
    };
    let gains = ControllerGains {
        k1,
        eps_a,
        eps_d,
        barrier: BarrierParams {
            k2,
            eps,
            eps_s,
            r_s,
            r_a,
        },
    };

    let mut inflow = Inflow {
        count: 0,
        start: 0.0,
        end: 0.5 * duration,
        schedule: Vec::new(),
    };
    if kind == ScenarioKind::DynamicInflowSquare {
        match inflow_sec.parse("count")? {
            Some(c) => inflow.count = c,
            None => {
                inflow.count = 40;
                note("inflow.count", 40.0);
            }
        }
        inflow.start = inflow_sec.parse("start")?.unwrap_or(0.0);
        match inflow_sec.parse("end")? {
            Some(e) => inflow.end = e,
            None => note("inflow.end", inflow.end),
        }
    }

    let mut separation = 1.5 * r_s;
    if kind == ScenarioKind::TwoAgentConflict {
        match conflict.parse("separation")? {
            Some(s) => separation = s,
            None => note("separation", separation),
        }
    }

    let mut vehicles = Vec::new();
    for mut sec in sections {
        let line = sec.line;
        let wrong_kind = |want: ScenarioKind| ConfigError::Syntax {
            line,
            message: format!("[{}] is only allowed with kind = {want}", sec.name),
        };
        match sec.name.as_str() {
            "spawn" => {
                if kind != ScenarioKind::DynamicInflowSquare {
                    return Err(wrong_kind(ScenarioKind::DynamicInflowSquare));
                }
                let time = required(sec.parse("time")?, "spawn", "time")?;
                let edge: EdgeChoice = sec.parse("edge")?.unwrap_or(EdgeChoice::Random);
                let count = sec.parse("count")?.unwrap_or(1);
                inflow.schedule.push(SpawnBatch { time, edge, count });
            }
            "vehicle" => {
                if kind != ScenarioKind::Custom {
                    return Err(wrong_kind(ScenarioKind::Custom));
                }
                let time = sec.parse("time")?.unwrap_or(0.0);
                let (_, p) = required(sec.vector("position", 2)?, "vehicle", "position")?;
                let velocity = sec
                    .vector("velocity", 2)?
                    .map_or(Vec2::ZERO, |(_, v)| Vec2::new(v[0], v[1]));
                let mut route = Vec::new();
                while let Some((line, v)) = sec.vector("line", 4)? {
                    let anchor = Vec2::new(v[0], v[1]);
                    let normal = Vec2::new(v[2], v[3]);
                    let dl =
                        if (normal.norm() - 1.0).abs() <= crate::controller::NORMAL_TOLERANCE {
                            DestinationLine::new(anchor, normal)
                        } else {
                            DestinationLine::through(anchor, normal)
                        }
                        .map_err(|e| ConfigError::Key {
                            line,
                            key: "line".into(),
                            message: e.to_string(),
                        })?;
                    route.push(dl);
                }
                if route.is_empty() {
                    return Err(ConfigError::Missing {
                        section: "vehicle",
                        key: "line",
                    });
                }
                vehicles.push(VehicleSpec {
                    time,
                    position: Vec2::new(p[0], p[1]),
                    velocity,
                    route,
                });
            }
            _ => unreachable!("singleton sections were removed"),
        }
        sec.finish()?;
    }
    for sec in [&scenario, &fleet, &gains_sec, &inflow_sec, &conflict] {
        sec.finish()?;
    }

    let config = ScenarioConfig {
        kind,
        side,
        duration,
        dt,
        seed,
        params,
        gains,
        inflow,
        separation,
        vehicles,
    };
    config.validate()?;
    Ok(Parsed { config, defaults })
}

/// Writes a config in the scenario-file grammar with every value explicit.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let p = &cfg.params;
    let g = &cfg.gains;
    let b = &g.barrier;
    let _ = writeln!(s, "[scenario]");
    let _ = writeln!(s, "kind = {}", cfg.kind);
    let _ = writeln!(s, "side = {:?}", cfg.side);
    let _ = writeln!(s, "duration = {:?}", cfg.duration);
    let _ = writeln!(s, "dt = {:?}", cfg.dt);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "\n[fleet]");
    for (k, v) in [
        ("r_s", p.r_s),
        ("r_a", p.r_a),
        ("v_m", p.v_m),
        ("l", p.l),
        ("r_d", p.r_d),
        ("physical_radius", p.physical_radius),
    ] {
        let _ = writeln!(s, "{k} = {v:?}");
    }
    let _ = writeln!(s, "\n[gains]");
    for (k, v) in [
        ("k1", g.k1),
        ("eps_a", g.eps_a),
        ("eps_d", g.eps_d),
        ("k2", b.k2),
        ("eps", b.eps),
        ("eps_s", b.eps_s),
    ] {
        let _ = writeln!(s, "{k} = {v:?}");
    }
    match cfg.kind {
        ScenarioKind::DynamicInflowSquare => {
            let i = &cfg.inflow;
            let _ = writeln!(
                s,
                "\n[inflow]\ncount = {}\nstart = {:?}\nend = {:?}",
                i.count, i.start, i.end
            );
            for batch in &i.schedule {
                let _ = writeln!(
                    s,
                    "\n[spawn]\ntime = {:?}\nedge = {}\ncount = {}",
                    batch.time, batch.edge, batch.count
                );
            }
        }
        ScenarioKind::TwoAgentConflict => {
            let _ = writeln!(s, "\n[conflict]\nseparation = {:?}", cfg.separation);
        }
        ScenarioKind::Custom => {
            for v in &cfg.vehicles {
                let _ = writeln!(s, "\n[vehicle]\ntime = {:?}", v.time);
                let _ = writeln!(s, "position = {:?}, {:?}", v.position.x, v.position.y);
                let _ = writeln!(s, "velocity = {:?}, {:?}", v.velocity.x, v.velocity.y);
                for line in &v.route {
                    let (a, n) = (line.anchor(), line.normal());
                    let _ = writeln!(s, "line = {:?}, {:?}, {:?}, {:?}", a.x, a.y, n.x, n.y);
                }
            }
        }
        ScenarioKind::AntipodalOctet => {}
    }
    s
}
