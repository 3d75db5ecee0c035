//! `planner`: headless entry points.
//!
//! Exit codes: 0 success, 1 planner failure (goal not reached, no path),
//! 2 usage or validation error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blackboard_bridge::{ServerConfig, ServerError, Session, SessionConfig};
use blackboard_core::oracles::OracleError;
use blackboard_core::scenario::ScenarioError;
use blackboard_core::trace::TraceError;
use blackboard_core::{
    export_svg, grid_bfs_path, potential_descent_run, read_trace, run, visibility_graph_path, Body,
    Engine, Metrics, Scenario, Status, Trace,
};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "planner",
    version,
    about = "Blackboard multi-agent path planner"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless and print its summary.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes the JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Writes an SVG rendering here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run every scenario in a directory, in parallel.
    Batch {
        dir: PathBuf,
        /// Runs seeds 1..=N of each scenario instead of its own seed.
        #[arg(long)]
        seeds: Option<u64>,
        /// Writes the JSON report here.
        #[arg(long)]
        report: PathBuf,
        /// Writes one trace per run into this directory.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Solve a scenario's scene with a reference planner.
    Oracle {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Visgraph)]
        method: Method,
        /// Grid resolution; defaults to the scene diagonal / 500.
        #[arg(long)]
        h: Option<f64>,
        /// Descent step; defaults to the attraction agent's step bound.
        #[arg(long)]
        step: Option<f64>,
    },
    /// Serve a live session over WebSocket.
    Serve {
        scenario: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Ticks per second while running.
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        #[arg(long, default_value_t = 1)]
        snapshot_every: u64,
        /// Directory searched by `load_scenario` commands.
        #[arg(long)]
        scenario_dir: Option<PathBuf>,
    },
    /// Read a trace, print its summary and optionally render it.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Re-runs the embedded scenario and compares digests.
        #[arg(long)]
        verify: bool,
    },
    /// Check a scenario file and list every problem.
    Validate { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Visgraph,
    Grid,
    /// Plain potential descent (attraction and collision only).
    Descent,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Server(#[from] ServerError),
    #[error("{0}")]
    Usage(String),
}

/// One run, as printed by `run` and listed in a batch report.
#[derive(Debug, Serialize)]
struct RunSummary {
    scenario: String,
    seed: u64,
    status: Status,
    trace_digest: String,
    metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    svg_path: Option<PathBuf>,
}

impl RunSummary {
    fn new(trace: &Trace) -> Self {
        Self {
            scenario: trace.header.scenario_name.clone(),
            seed: trace.header.seed,
            status: trace.final_status().unwrap_or(Status::Running),
            trace_digest: trace.digest(),
            metrics: trace.metrics.clone(),
            trace_path: None,
            svg_path: None,
        }
    }

    fn succeeded(&self) -> bool {
        self.status == Status::Succeeded
    }

    fn print(&self) {
        println!("scenario: {}", self.scenario);
        println!("seed: {}", self.seed);
        println!("status: {:?}", self.status);
        if let Some(m) = &self.metrics {
            println!("ticks: {}", m.ticks_used);
            println!("path_length: {:.6}", m.workspace_path_length);
            println!("config_path_length: {:.6}", m.config_path_length);
            println!("min_clearance: {}", fmt_clearance(m.min_clearance));
            println!("blocked_ticks: {}", m.blocked_ticks);
            println!("comfort: {:.6}", m.comfort);
        } else {
            println!("ticks: 0");
        }
        println!("digest: {}", self.trace_digest);
        if let Some(p) = &self.trace_path {
            println!("trace: {}", p.display());
        }
        if let Some(p) = &self.svg_path {
            println!("svg: {}", p.display());
        }
    }
}

fn fmt_clearance(c: f64) -> String {
    if c.is_finite() {
        format!("{c:.6}")
    } else {
        "none".into()
    }
}

#[derive(Debug, Serialize)]
struct Aggregate {
    runs: usize,
    succeeded: usize,
    success_rate: f64,
    /// Means over successful runs; absent when none succeeded.
    mean_ticks: Option<f64>,
    mean_path_length: Option<f64>,
    min_clearance: Option<f64>,
}

impl Aggregate {
    fn of(runs: &[RunSummary]) -> Self {
        let ok: Vec<&Metrics> = runs
            .iter()
            .filter(|r| r.succeeded())
            .filter_map(|r| r.metrics.as_ref())
            .collect();
        let mean = |f: fn(&Metrics) -> f64| {
            (!ok.is_empty()).then(|| ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64)
        };
        let clearance = runs
            .iter()
            .filter_map(|r| r.metrics.as_ref())
            .map(|m| m.min_clearance)
            .filter(|c| c.is_finite())
            .reduce(f64::min);
        Self {
            runs: runs.len(),
            succeeded: ok.len(),
            success_rate: if runs.is_empty() {
                0.0
            } else {
                ok.len() as f64 / runs.len() as f64
            },
            mean_ticks: mean(|m| m.ticks_used as f64),
            mean_path_length: mean(|m| m.workspace_path_length),
            min_clearance: clearance,
        }
    }
}

#[derive(Debug, Serialize)]
struct BatchReport {
    aggregate: Aggregate,
    runs: Vec<RunSummary>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn write_trace(path: &Path, trace: &Trace) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut sink = BufWriter::new(file);
    trace.write(&mut sink).map_err(|source| CliError::Trace {
        path: path.to_path_buf(),
        source,
    })?;
    sink.flush().map_err(io_err(path))
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    trace_out: Option<PathBuf>,
    svg_out: Option<PathBuf>,
) -> Result<bool, CliError> {
    let scenario = load(path, seed)?;
    let trace = run(scenario)?;
    let mut summary = RunSummary::new(&trace);
    if let Some(p) = trace_out {
        write_trace(&p, &trace)?;
        summary.trace_path = Some(p);
    }
    if let Some(p) = svg_out {
        write_file(&p, export_svg(&trace, &trace.header.scenario).as_bytes())?;
        summary.svg_path = Some(p);
    }
    summary.print();
    Ok(summary.succeeded())
}

fn cmd_batch(
    dir: &Path,
    seeds: Option<u64>,
    report: &Path,
    traces: Option<PathBuf>,
) -> Result<bool, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no *.json scenarios in {}",
            dir.display()
        )));
    }
    if seeds == Some(0) {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    // Validate everything before running anything.
    let scenarios = files
        .iter()
        .map(|p| Scenario::load(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(d) = &traces {
        std::fs::create_dir_all(d).map_err(io_err(d))?;
    }
    let jobs: Vec<Scenario> = scenarios
        .into_iter()
        .flat_map(|s| match seeds {
            Some(n) => (1..=n)
                .map(|seed| Scenario { seed, ..s.clone() })
                .collect::<Vec<_>>(),
            None => vec![s],
        })
        .collect();
    let runs = jobs
        .into_par_iter()
        .map(|scenario| {
            let trace = run(scenario)?;
            let mut summary = RunSummary::new(&trace);
            if let Some(d) = &traces {
                let p = d.join(format!("{}-seed{}.jsonl", summary.scenario, summary.seed));
                write_trace(&p, &trace)?;
                summary.trace_path = Some(p);
            }
            log::info!(
                "{} seed {}: {:?}",
                summary.scenario,
                summary.seed,
                summary.status
            );
            Ok(summary)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report_doc = BatchReport {
        aggregate: Aggregate::of(&runs),
        runs,
    };
    let json = serde_json::to_string_pretty(&report_doc).expect("report serializes");
    write_file(report, json.as_bytes())?;
    for r in &report_doc.runs {
        let length = r.metrics.as_ref().map_or("-".to_string(), |m| {
            format!("{:.4}", m.workspace_path_length)
        });
        println!("{}\t{}\t{:?}\t{}", r.scenario, r.seed, r.status, length);
    }
    let a = &report_doc.aggregate;
    println!("succeeded {}/{}", a.succeeded, a.runs);
    println!("report: {}", report.display());
    Ok(a.succeeded == a.runs)
}

fn cmd_oracle(
    path: &Path,
    method: Method,
    h: Option<f64>,
    step: Option<f64>,
) -> Result<bool, CliError> {
    let scenario = load(path, None)?;
    if let Method::Descent = method {
        let step = step.unwrap_or_else(|| {
            scenario
                .agents
                .iter()
                .find(|a| matches!(a.kind, blackboard_core::AgentKind::Attraction { .. }))
                .map_or(0.05, |a| a.step_bound)
        });
        if !(step.is_finite() && step > 0.0) {
            return Err(CliError::Usage(format!(
                "--step must be finite and > 0, got {step}"
            )));
        }
        let max = scenario.engine.max_ticks;
        let trace = potential_descent_run(&scenario, step, max)?;
        let status = trace.final_status().unwrap_or(Status::Running);
        let found = status == Status::Succeeded;
        println!("method: descent");
        println!("found: {found}");
        println!("status: {status:?}");
        if let Some(m) = &trace.metrics {
            println!("length: {:.6}", m.workspace_path_length);
            println!("ticks: {}", m.ticks_used);
        }
        return Ok(found);
    }
    let start = Engine::new(scenario.clone())?.initial().goal_frame;
    let radius = match &scenario.model.body {
        Body::Point { radius } => *radius,
        _ => {
            log::warn!("oracles plan for the goal frame only; body extent is ignored");
            0.0
        }
    };
    let goal = scenario.scene.goal.point;
    let result = match method {
        Method::Visgraph => visibility_graph_path(&scenario.scene, start, goal, radius)?,
        Method::Grid => {
            let h = h.unwrap_or(scenario.scene.bounds.diagonal() / 500.0);
            grid_bfs_path(&scenario.scene, start, goal, h, radius)?
        }
        Method::Descent => unreachable!(),
    };
    println!(
        "method: {}",
        match method {
            Method::Grid => "grid",
            _ => "visgraph",
        }
    );
    println!("found: {}", result.found);
    if let Some(length) = result.length {
        println!("length: {length:.6}");
    }
    if let Some(path) = &result.path {
        println!("vertices: {}", path.vertices.len());
    }
    Ok(result.found)
}

fn cmd_serve(
    path: &Path,
    host: std::net::IpAddr,
    port: u16,
    rate: f64,
    snapshot_every: u64,
    scenario_dir: Option<PathBuf>,
) -> Result<bool, CliError> {
    let scenario = load(path, None)?;
    if snapshot_every == 0 {
        return Err(CliError::Usage("--snapshot-every must be >= 1".into()));
    }
    let scenario_dir = scenario_dir.or_else(|| path.parent().map(Path::to_path_buf));
    let session = Session::new(
        scenario,
        SessionConfig {
            snapshot_every,
            scenario_dir,
        },
    )?;
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(path))?;
    runtime.block_on(async move {
        let server =
            blackboard_bridge::start(SocketAddr::new(host, port), session, ServerConfig { rate })
                .await?;
        println!("listening: ws://{}/ws", server.local_addr);
        tokio::signal::ctrl_c().await.map_err(io_err(path))?;
        server.shutdown().await?;
        Ok(true)
    })
}

fn cmd_replay(path: &Path, svg: Option<PathBuf>, verify: bool) -> Result<bool, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let (trace, warnings) = read_trace(BufReader::new(file)).map_err(|source| CliError::Trace {
        path: path.to_path_buf(),
        source,
    })?;
    for w in &warnings {
        eprintln!("warning: {w:?}");
    }
    let mut summary = RunSummary::new(&trace);
    if let Some(p) = svg {
        write_file(&p, export_svg(&trace, &trace.header.scenario).as_bytes())?;
        summary.svg_path = Some(p);
    }
    summary.print();
    if verify {
        let rerun = run(trace.header.scenario.clone())?;
        let same = rerun.digest() == trace.digest();
        println!("verified: {same}");
        return Ok(same);
    }
    Ok(true)
}

fn cmd_validate(path: &Path) -> Result<bool, CliError> {
    let scenario = load(path, None)?;
    println!("ok: {} ({} agents)", scenario.name, scenario.agents.len());
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Cmd::Run {
            scenario,
            seed,
            trace,
            svg,
        } => cmd_run(&scenario, seed, trace, svg),
        Cmd::Batch {
            dir,
            seeds,
            report,
            traces,
        } => cmd_batch(&dir, seeds, &report, traces),
        Cmd::Oracle {
            scenario,
            method,
            h,
            step,
        } => cmd_oracle(&scenario, method, h, step),
        Cmd::Serve {
            scenario,
            port,
            host,
            rate,
            snapshot_every,
            scenario_dir,
        } => cmd_serve(&scenario, host, port, rate, snapshot_every, scenario_dir),
        Cmd::Replay { trace, svg, verify } => cmd_replay(&trace, svg, verify),
        Cmd::Validate { scenario } => cmd_validate(&scenario),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PLANNER_LOG", "warn")).init();
    // clap exits with 2 on usage errors.
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
