//! Command-line front end. Every subcommand maps to one lifecycle or
//! post-processing operation.
//!
//! Exit status: 0 on success, 1 on usage, validation or runtime errors, 2
//! when `csv` had to skip malformed lines.

use std::ffi::OsString;
use std::io;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::flightsim::FlightPlan;
use crate::geodesy::GeoPosition;
use crate::orchestrator::{
    parse_command_script, reset_experiment, run_console_client, run_experiment,
    start_experiment, ConsoleServer, ExperimentConfig, Pacing, ResetMode, RunSummary,
};
use crate::postproc::{generate_kml, logs_to_csv, merge_csv, plot_series, ColorScale, CsvTable};

pub const DEFAULT_CONSOLE_ADDR: &str = "127.0.0.1:7600";

#[derive(Debug, Parser)]
#[command(name = "aerotwin", version, about = "UAV cellular experiment emulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its logs.
    Run(RunArgs),
    /// Attach to a running experiment and relay commands from stdin.
    Console {
        #[arg(long, default_value = DEFAULT_CONSOLE_ADDR)]
        connect: String,
    },
    /// Ask a running experiment to stop at the next step boundary.
    Stop {
        #[arg(long, default_value = DEFAULT_CONSOLE_ADDR)]
        connect: String,
    },
    /// Clear an output directory for a fresh run.
    Reset {
        #[arg(long, env = "AEROTWIN_OUT")]
        out: PathBuf,
        /// Move artifacts aside instead of deleting them.
        #[arg(long)]
        archive: bool,
    },
    /// Convert run logs to one CSV per node and process.
    Csv {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join CSV tables on nearest timestamp.
    Merge {
        #[arg(long = "csv", required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a color-coded KML track.
    Kml {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        metric: String,
        /// Color scale as `min,max`; defaults to the data range.
        #[arg(long)]
        scale: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write metric and distance series as CSV plus an SVG next to it.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        metric: String,
        /// Reference point as `lat,lon[,alt]`.
        #[arg(long = "ref")]
        reference: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert a QGroundControl `.plan` file to a flight plan document.
    ConvertPlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then to
    /// `$AEROTWIN_OUT/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Pace steps to the wall clock and accept console connections.
    #[arg(long)]
    pub realtime: bool,
    #[arg(long, default_value_t = 1.0, requires = "realtime")]
    pub speedup: f64,
    #[arg(long, default_value = DEFAULT_CONSOLE_ADDR, requires = "realtime")]
    pub listen: String,
    /// Script of `<seconds> <COMMAND>` lines applied during the run.
    #[arg(long)]
    pub commands: Option<PathBuf>,
}

/// Parse `args` (program name first), execute, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => run(args).map(|_| 0),
        Command::Console { connect } => {
            let stdin = io::stdin();
            run_console_client(connect.as_str(), stdin.lock(), io::stdout())
                .with_context(|| format!("console at {connect}"))?;
            Ok(0)
        }
        Command::Stop { connect } => {
            let mut out = Vec::new();
            run_console_client(connect.as_str(), "STOP\n".as_bytes(), &mut out)
                .with_context(|| format!("console at {connect}"))?;
            let reply = String::from_utf8_lossy(&out);
            print!("{reply}");
            Ok(if reply.starts_with("OK") { 0 } else { 1 })
        }
        Command::Reset { out, archive } => {
            let mode = if archive { ResetMode::Archive } else { ResetMode::Delete };
            match reset_experiment(&out, mode)? {
                Some(dest) => println!("archived {} to {}", out.display(), dest.display()),
                None => println!("reset {}", out.display()),
            }
            Ok(0)
        }
        Command::Csv { logs, out } => {
            let conv = logs_to_csv(&logs, &out)?;
            for (path, rows) in &conv.outputs {
                println!("{} ({rows} rows)", path.display());
            }
            for w in &conv.warnings {
                eprintln!("warning: {w}");
            }
            Ok(if conv.is_partial() { 2 } else { 0 })
        }
        Command::Merge { csv, tolerance, out } => {
            let tables = csv
                .iter()
                .map(|p| CsvTable::read(p).with_context(|| p.display().to_string()))
                .collect::<Result<Vec<_>>>()?;
            let (merged, warnings) = merge_csv(&tables, tolerance)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            merged.write(&out)?;
            println!("{} ({} rows)", out.display(), merged.len());
            Ok(0)
        }
        Command::Kml { csv, metric, scale, out } => {
            let table = CsvTable::read(&csv).with_context(|| csv.display().to_string())?;
            let scale = scale.as_deref().map(parse_scale).transpose()?;
            let doc = generate_kml(&table, &metric, scale)?;
            write_file(&out, doc.as_bytes())?;
            println!("{}", out.display());
            Ok(0)
        }
        Command::Plot { csv, metric, reference, out } => {
            let table = CsvTable::read(&csv).with_context(|| csv.display().to_string())?;
            let reference = parse_position(&reference)?;
            let data = plot_series(&table, &metric, &reference)?;
            let svg = out.with_extension("svg");
            write_file(&out, data.to_csv().as_bytes())?;
            write_file(&svg, data.to_svg().as_bytes())?;
            println!("{}\n{}", out.display(), svg.display());
            Ok(0)
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let v = cfg.validate()?;
            println!(
                "ok: {} steps of {} ms, mission {:.1} s",
                v.total_steps,
                v.step_ms(),
                v.mission_duration_s
            );
            for w in &v.warnings {
                eprintln!("warning: {w}");
            }
            Ok(0)
        }
        Command::ConvertPlan { plan, out } => {
            let text = std::fs::read_to_string(&plan).with_context(|| plan.display().to_string())?;
            let fp = FlightPlan::from_qgc_plan(&text)?;
            write_file(&out, fp.to_json().as_bytes())?;
            println!("{} ({} waypoints)", out.display(), fp.waypoints().len());
            Ok(0)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("`{p}` is not a number"))
        })
        .collect()
}

fn parse_scale(s: &str) -> Result<ColorScale> {
    match parse_numbers(s)?[..] {
        [min, max] => Ok(ColorScale::new(min, max)?),
        _ => bail!("--scale expects min,max"),
    }
}

fn parse_position(s: &str) -> Result<GeoPosition> {
    let v = parse_numbers(s)?;
    let (lat, lon, alt) = match v[..] {
        [lat, lon] => (lat, lon, 0.0),
        [lat, lon, alt] => (lat, lon, alt),
        _ => bail!("--ref expects lat,lon[,alt]"),
    };
    Ok(GeoPosition::new(lat, lon, alt)?)
}

fn resolve_out(args: &RunArgs, cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(out) = &args.out {
        return Ok(out.clone());
    }
    if let Some(out) = &cfg.output_dir {
        return Ok(out.clone());
    }
    match std::env::var_os("AEROTWIN_OUT") {
        Some(root) => Ok(PathBuf::from(root).join(&cfg.name)),
        None => bail!("no output directory: pass --out or set AEROTWIN_OUT"),
    }
}

fn run(args: RunArgs) -> Result<RunSummary> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration_s = Some(d);
    }
    let validated = cfg.validate()?;
    for w in &validated.warnings {
        eprintln!("warning: {w}");
    }
    let script = match &args.commands {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| p.display().to_string())?;
            parse_command_script(&text)?
        }
        None => Vec::new(),
    };
    let out = resolve_out(&args, &cfg)?;

    let summary = if args.realtime {
        if !(args.speedup.is_finite() && args.speedup > 0.0) {
            bail!("--speedup must be positive");
        }
        let handle = start_experiment(&cfg, &out, script, Pacing::Realtime { speedup: args.speedup })?;
        let server = ConsoleServer::bind(args.listen.as_str(), handle.commands())
            .with_context(|| format!("listening on {}", args.listen))?;
        eprintln!("console listening on {}", server.local_addr());
        let summary = handle.wait()?;
        server.shutdown();
        summary
    } else {
        run_experiment(&cfg, &out, &script)?
    };
    println!(
        "{}: {} steps ({:.1} s simulated), {} log files in {}",
        summary.reason,
        summary.steps,
        summary.end_ms as f64 / 1000.0,
        summary.files.len(),
        out.display()
    );
    Ok(summary)
}
