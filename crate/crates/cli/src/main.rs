use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use freeflight_core::trace::{write_events, TraceWriter};
use freeflight_core::{
    export_plot_data, parse_scenario, run, serialize, ConfigError, ExportKind, OutputError,
    RunSummary,
};

/// Free-flight fleet simulator.
#[derive(Debug, Parser)]
#[command(name = "freeflight", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write trace.csv, events.csv and summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Step length in seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated time in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write every n-th tick to the trace.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        sample_every: u64,
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and validate a scenario, then print it with defaults filled in.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Turn a trace into plot-ready CSV.
    Export {
        #[arg(long)]
        trace: PathBuf,
        /// routes, min_dist_series, line_dist_series or v1_series.
        #[arg(long)]
        kind: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Safety floor for min_dist_series; read from summary.json next to
        /// the trace when omitted.
        #[arg(long)]
        safety_floor: Option<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Output(OutputError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<OutputError> for Failure {
    fn from(e: OutputError) -> Self {
        Failure::Output(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Output(e.into())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        Failure::Output(io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    scenario: &Path,
    seed: Option<u64>,
    dt: Option<f64>,
    duration: Option<f64>,
    out: &Path,
    sample_every: u64,
    quiet: bool,
) -> Result<ExitCode, Failure> {
    let mut cfg = parse_scenario(scenario)?.config;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    if let Some(duration) = duration {
        cfg.duration = duration;
    }
    cfg.validate().map_err(ConfigError::from)?;

    std::fs::create_dir_all(out)?;
    let mut trace = TraceWriter::new(create(&out.join("trace.csv"))?)?;
    let mut write_error = None;
    let result = run(cfg, sample_every, |r| {
        if write_error.is_none() {
            if let Err(e) = trace.write(r) {
                write_error = Some(e);
            }
        }
    })
    .map_err(ConfigError::from)?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    trace.finish()?.flush()?;

    let mut events = create(&out.join("events.csv"))?;
    write_events(&mut events, &result.events)?;
    events.flush()?;
    let mut summary = create(&out.join("summary.json"))?;
    writeln!(summary, "{}", result.summary.to_json()?)?;
    summary.flush()?;

    let s = &result.summary;
    if !quiet {
        println!(
            "{}: {}/{} arrived, in-flight violations {}, spawn-induced {}, min filtered distance {}, {} trace rows in {:.2} s",
            s.scenario,
            s.agents_arrived,
            s.agents_spawned,
            s.safety_violations_in_flight,
            s.safety_violations_spawn_induced,
            s.global_min_filtered_dist_m.map_or("n/a".to_string(), |d| format!("{d:.3} m")),
            s.trace_rows,
            s.wall_clock_s
        );
    }
    Ok(if s.safety_violations_in_flight > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_validate(scenario: &Path) -> Result<ExitCode, Failure> {
    let parsed = parse_scenario(scenario)?;
    print!("{}", serialize(&parsed.config));
    if !parsed.defaults.is_empty() {
        println!();
        for d in &parsed.defaults {
            println!("# {d}");
        }
    }
    if let Some(w) = parsed.config.packing_warning() {
        println!("# warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_export(
    trace: &Path,
    kind: &str,
    out: Option<&Path>,
    safety_floor: Option<f64>,
) -> Result<ExitCode, Failure> {
    let kind: ExportKind = kind.parse()?;
    let records = freeflight_core::trace::read_trace(
        File::open(trace)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", trace.display())))?,
    )?;
    let floor = safety_floor.or_else(|| {
        let path = trace.with_file_name("summary.json");
        let text = std::fs::read_to_string(path).ok()?;
        RunSummary::from_json(&text).ok().map(|s| s.safety_floor_m)
    });
    match out {
        Some(path) => {
            let mut w = create(path)?;
            export_plot_data(&records, kind, floor, &mut w)?;
            w.flush()?;
        }
        None => export_plot_data(&records, kind, floor, io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let quiet = matches!(cli.command, Command::Run { quiet: true, .. });
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if quiet {
        "warn"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();

    let result = match &cli.command {
        Command::Run {
            scenario,
            seed,
            dt,
            duration,
            out,
            sample_every,
            quiet,
        } => cmd_run(scenario, *seed, *dt, *duration, out, *sample_every, *quiet),
        Command::Validate { scenario } => cmd_validate(scenario),
        Command::Export {
            trace,
            kind,
            out,
            safety_floor,
        } => cmd_export(trace, kind, out.as_deref(), *safety_floor),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Output(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
