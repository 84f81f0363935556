use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hrc_safety::session::{
    annotations_path, replay, write_metrics_csv, Mode, RunConfig, RunMetrics, RunOptions, ScenarioConfig, Session,
};

mod serve;

#[derive(Parser)]
#[command(
    name = "hrc-cell",
    version,
    about = "Simulated depth-camera safety cell for human-robot collaboration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the assembly scenario with a simulated operator.
    Run(RunArgs),
    /// Feed a recorded depth stream back through the monitor.
    Replay(ReplayArgs),
    /// Host an interactive session for operator consoles.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    scenario: PathBuf,
    /// Run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Record the depth stream here, with sidecar annotation and verdict files.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Write metrics to this file: JSON for a .json extension, CSV otherwise.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Print only the final metrics instead of the event log.
    #[arg(long)]
    headless: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Monitor parameters to replay with; the recorded ones when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    /// TCP port for both framed clients and WebSocket upgrades; 0 picks one.
    #[arg(long)]
    pub port: u16,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "ar")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Snapshots per second.
    #[arg(long, default_value_t = 20.0)]
    pub snapshot_rate: f64,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Include the 3D fence mesh in snapshots.
    #[arg(long)]
    pub fence: bool,
    /// Let the simulated operator press the buttons too.
    #[arg(long)]
    pub auto_operator: bool,
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunConfig::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_metrics(path: &Path, metrics: &RunMetrics) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::to_writer_pretty(file, metrics)?;
    } else {
        write_metrics_csv(file, std::slice::from_ref(metrics))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let config = load_config(args.config.as_deref())?;
    let mut session = Session::new(scenario, config, RunOptions::new(args.mode, args.seed))?;
    if let Some(path) = &args.record {
        session.record_to(path)?;
    }
    let mut out = io::stdout().lock();
    let mut shown = 0;
    loop {
        let finished = match session.step() {
            Ok(f) => f,
            Err(e) => {
                // keep what was recorded replayable
                if args.record.is_some() {
                    session.finish_recording()?;
                }
                return Err(e.into());
            }
        };
        if !args.headless {
            for e in &session.events()[shown..] {
                writeln!(out, "{:8.2}  {}", e.time, e.message)?;
            }
            shown = session.events().len();
        }
        if finished {
            break;
        }
    }
    if args.record.is_some() {
        session.finish_recording()?;
    }
    let m = session.metrics().context("session ended without metrics")?;
    writeln!(
        out,
        "{} total {:.2} s, robot idle {:.2} s, {} halts, {} confirmations",
        m.run_id, m.total_time_s, m.robot_idle_time_s, m.halts, m.confirmations
    )?;
    if let Some(path) = &args.metrics {
        write_metrics(path, &m)?;
    }
    Ok(())
}

fn replay_cmd(args: ReplayArgs) -> Result<()> {
    let config = args.config.as_deref().map(|p| load_config(Some(p))).transpose()?;
    let stream = fs::File::open(&args.stream).with_context(|| format!("opening {}", args.stream.display()))?;
    let sidecar = annotations_path(&args.stream);
    let annotations = fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
    let mut out = io::stdout().lock();
    match replay(io::BufReader::new(stream), &annotations, config.as_ref()) {
        Ok(output) => {
            let h = &output.header;
            writeln!(
                out,
                "# replay of {} run, seed {}, scenario {}",
                h.mode, h.seed, h.scenario
            )?;
            if output.param_diffs.is_empty() {
                writeln!(out, "# parameters match the recording")?;
            } else {
                writeln!(out, "# parameters differ from the recording; verdicts may differ")?;
                for d in &output.param_diffs {
                    writeln!(out, "#   {d}")?;
                }
            }
            for line in &output.lines {
                writeln!(out, "{line}")?;
            }
            Ok(())
        }
        Err(err) => {
            for line in &err.lines {
                writeln!(out, "{line}")?;
            }
            bail!("{err}")
        }
    }
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Replay(args) => replay_cmd(args),
        Command::Serve(args) => serve::serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
