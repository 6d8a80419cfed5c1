//! Trace, event and summary persistence, plus plot-ready exports.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::OutputError;
use crate::math::Vec2;
use crate::sim::SimEvent;

/// Column names of trace.csv, in field order.
pub const TRACE_HEADER: [&str; 15] = [
    "tick",
    "time",
    "agent",
    "active",
    "p_x",
    "p_y",
    "v_x",
    "v_y",
    "xi_x",
    "xi_y",
    "v_cmd_x",
    "v_cmd_y",
    "dist_to_line",
    "min_neighbor_dist",
    "v1_contribution",
];

pub const EVENTS_HEADER: [&str; 6] = ["tick", "time", "kind", "agent_a", "agent_b", "value"];

/// One agent at one sampled tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub tick: u64,
    pub time: f64,
    pub agent: u32,
    /// False on the tick the agent completes its route.
    pub active: bool,
    pub position: Vec2,
    pub velocity: Vec2,
    pub filtered: Vec2,
    /// Command held during the step that produced this state.
    pub command: Vec2,
    /// Distance from the filtered position to the line flown toward during the tick.
    pub dist_to_line: f64,
    /// Smallest filtered distance to any other airborne agent.
    pub min_neighbor_dist: Option<f64>,
    pub v1_contribution: f64,
}

/// 17 significant digits round-trip every f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_field<T: FromStr>(row: usize, name: &str, raw: &str) -> Result<T, OutputError> {
    raw.parse().map_err(|_| OutputError::Malformed {
        row,
        message: format!("bad {name}: {raw:?}"),
    })
}

impl TraceRecord {
    fn to_fields(&self) -> [String; 15] {
        [
            self.tick.to_string(),
            fmt_f64(self.time),
            self.agent.to_string(),
            if self.active { "1" } else { "0" }.to_string(),
            fmt_f64(self.position.x),
            fmt_f64(self.position.y),
            fmt_f64(self.velocity.x),
            fmt_f64(self.velocity.y),
            fmt_f64(self.filtered.x),
            fmt_f64(self.filtered.y),
            fmt_f64(self.command.x),
            fmt_f64(self.command.y),
            fmt_f64(self.dist_to_line),
            self.min_neighbor_dist.map(fmt_f64).unwrap_or_default(),
            fmt_f64(self.v1_contribution),
        ]
    }

    fn from_fields(row: usize, rec: &csv::StringRecord) -> Result<Self, OutputError> {
        if rec.len() != TRACE_HEADER.len() {
            return Err(OutputError::Malformed {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    TRACE_HEADER.len(),
                    rec.len()
                ),
            });
        }
        let f =
            |k: usize| -> Result<f64, OutputError> { parse_field(row, TRACE_HEADER[k], &rec[k]) };
        let active = match &rec[3] {
            "1" => true,
            "0" => false,
            other => {
                return Err(OutputError::Malformed {
                    row,
                    message: format!("bad active flag: {other:?}"),
                })
            }
        };
        Ok(TraceRecord {
            tick: parse_field(row, "tick", &rec[0])?,
            time: f(1)?,
            agent: parse_field(row, "agent", &rec[2])?,
            active,
            position: Vec2 { x: f(4)?, y: f(5)? },
            velocity: Vec2 { x: f(6)?, y: f(7)? },
            filtered: Vec2 { x: f(8)?, y: f(9)? },
            command: Vec2 {
                x: f(10)?,
                y: f(11)?,
            },
            dist_to_line: f(12)?,
            min_neighbor_dist: if rec[13].is_empty() {
                None
            } else {
                Some(f(13)?)
            },
            v1_contribution: f(14)?,
        })
    }
}

/// Streams trace records as CSV.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    rows: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Result<Self, OutputError> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(TRACE_HEADER)?;
        Ok(TraceWriter { inner, rows: 0 })
    }

    pub fn write(&mut self, record: &TraceRecord) -> Result<(), OutputError> {
        self.inner.write_record(record.to_fields())?;
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn finish(mut self) -> Result<W, OutputError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| OutputError::Io(e.into_error()))
    }
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRecord>, OutputError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(OutputError::Malformed {
            row: 0,
            message: "unexpected trace header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        out.push(TraceRecord::from_fields(i + 1, &rec?)?);
    }
    Ok(out)
}

pub fn write_events<W: Write>(out: W, events: &[SimEvent]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([
            e.tick.to_string(),
            fmt_f64(e.time),
            e.kind.as_str().to_string(),
            e.agent_a.to_string(),
            e.agent_b.map(|b| b.to_string()).unwrap_or_default(),
            e.value.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Flat run summary written as summary.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub duration_s: f64,
    pub ticks: u64,
    pub agents_spawned: u32,
    pub agents_arrived: u32,
    /// Per agent ordinal; null when the agent never arrived.
    pub arrival_times_s: Vec<Option<f64>>,
    pub spawn_times_s: Vec<f64>,
    pub global_min_filtered_dist_m: Option<f64>,
    pub min_compliant_filtered_dist_m: Option<f64>,
    pub safety_floor_m: f64,
    pub safety_violations_in_flight: u32,
    pub safety_violations_spawn_induced: u32,
    pub discretization_warnings: u32,
    pub detection_gaps: u64,
    pub filtered_bound_violations: u64,
    pub filtered_bound_violations_pair_margin: u64,
    pub max_filtered_bound_excess_m: Option<f64>,
    pub final_v1: f64,
    pub trace_rows: u64,
    pub wall_clock_s: f64,
}

impl RunSummary {
    pub fn to_json(&self) -> Result<String, OutputError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, OutputError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Plot-ready views of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Routes,
    MinDistSeries,
    LineDistSeries,
    V1Series,
}

impl ExportKind {
    pub const ALL: [ExportKind; 4] = [
        ExportKind::Routes,
        ExportKind::MinDistSeries,
        ExportKind::LineDistSeries,
        ExportKind::V1Series,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExportKind::Routes => "routes",
            ExportKind::MinDistSeries => "min_dist_series",
            ExportKind::LineDistSeries => "line_dist_series",
            ExportKind::V1Series => "v1_series",
        }
    }
}

impl fmt::Display for ExportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExportKind {
    type Err = OutputError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExportKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| OutputError::UnknownKind(s.to_string()))
    }
}

/// Writes one plot-ready CSV. `safety_floor` is emitted as a comment row
/// ahead of the header for the minimum-distance series.
pub fn export_plot_data<W: Write>(
    records: &[TraceRecord],
    kind: ExportKind,
    safety_floor: Option<f64>,
    mut out: W,
) -> Result<(), OutputError> {
    if kind == ExportKind::MinDistSeries {
        if let Some(floor) = safety_floor {
            writeln!(out, "# safety_floor_2rs={}", fmt_f64(floor))?;
        }
    }
    let mut w = csv::Writer::from_writer(out);
    match kind {
        ExportKind::Routes => {
            w.write_record(["agent", "tick", "time", "p_x", "p_y"])?;
            let mut by_agent: BTreeMap<u32, Vec<&TraceRecord>> = BTreeMap::new();
            for r in records {
                by_agent.entry(r.agent).or_default().push(r);
            }
            for (agent, mut rows) in by_agent {
                rows.sort_by_key(|r| r.tick);
                for r in rows {
                    w.write_record([
                        agent.to_string(),
                        r.tick.to_string(),
                        fmt_f64(r.time),
                        fmt_f64(r.position.x),
                        fmt_f64(r.position.y),
                    ])?;
                }
            }
        }
        ExportKind::MinDistSeries => {
            w.write_record(["time", "agent", "min_dist"])?;
            for r in records {
                w.write_record([
                    fmt_f64(r.time),
                    r.agent.to_string(),
                    r.min_neighbor_dist.map(fmt_f64).unwrap_or_default(),
                ])?;
            }
        }
        ExportKind::LineDistSeries => {
            w.write_record(["time", "agent", "dist_to_line"])?;
            for r in records {
                w.write_record([
                    fmt_f64(r.time),
                    r.agent.to_string(),
                    fmt_f64(r.dist_to_line),
                ])?;
            }
        }
        ExportKind::V1Series => {
            w.write_record(["tick", "time", "v1"])?;
            let mut totals: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
            for r in records {
                let e = totals.entry(r.tick).or_insert((r.time, 0.0));
                e.1 += r.v1_contribution;
            }
            for (tick, (time, v1)) in totals {
                w.write_record([tick.to_string(), fmt_f64(time), fmt_f64(v1)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
