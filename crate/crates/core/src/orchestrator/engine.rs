use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Receiver;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};

use super::config::{ExperimentConfig, NodeKind, ValidatedConfig};
use super::console::{apply_command, CommandSender, ConsoleCommand, ControlRequest, Envelope, Reply, ScheduledCommand};
use super::log::{log_file_name, LogRecord};
use super::OrchestratorError;
use crate::channel::{channel_matrix, mix64, ChannelError, ChannelMatrix, ChannelNode, PathLossModel};
use crate::flightsim::Vehicle;
use crate::mac::{select_mcs, McsSelection, RoundRobinScheduler, UeId};
use crate::traffic::{ping_rtt, PingConfig, Rtt};

/// Present in an output directory while a run is writing to it.
pub const LOCK_FILE: &str = ".aerotwin.lock";

const PROC_VEHICLE: &str = "vehicle";
const PROC_IPERF: &str = "iperf";
const PROC_PING: &str = "ping";
const PROC_EXPERIMENT: &str = "experiment";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Run steps back to back.
    Fast,
    /// Throttle so simulated time advances `speedup` times faster than the wall clock.
    Realtime { speedup: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    Completed,
    Stopped,
}

impl fmt::Display for EndReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EndReason::Completed => "completed",
            EndReason::Stopped => "stopped",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub end_ms: u64,
    pub reason: EndReason,
    pub files: Vec<PathBuf>,
    pub rejected_commands: usize,
}

/// Run a whole experiment on the calling thread, as fast as possible.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    script: &[ScheduledCommand],
) -> Result<RunSummary, OrchestratorError> {
    let validated = cfg.validate()?;
    let engine = Engine::prepare(validated, out, script.to_vec(), None, Pacing::Fast)?;
    engine.run()
}

/// Start an experiment on a background thread.
pub fn start_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    script: Vec<ScheduledCommand>,
    pacing: Pacing,
) -> Result<RunHandle, OrchestratorError> {
    let validated = cfg.validate()?;
    let (sender, rx) = CommandSender::channel();
    let finished = Arc::new(AtomicBool::new(false));
    let engine = Engine::prepare(validated, out, script, Some(rx), pacing)?;
    let flag = finished.clone();
    let thread = thread::spawn(move || {
        let result = engine.run();
        flag.store(true, Ordering::SeqCst);
        result
    });
    Ok(RunHandle {
        sender,
        thread: Some(thread),
        finished,
    })
}

pub struct RunHandle {
    sender: CommandSender,
    thread: Option<JoinHandle<Result<RunSummary, OrchestratorError>>>,
    finished: Arc<AtomicBool>,
}

impl RunHandle {
    pub fn commands(&self) -> CommandSender {
        self.sender.clone()
    }

    pub fn is_running(&self) -> bool {
        self.thread.is_some() && !self.finished.load(Ordering::SeqCst)
    }

    /// Halt at the next step boundary and return the finalized run.
    pub fn stop(&mut self) -> Result<RunSummary, OrchestratorError> {
        if !self.is_running() {
            return Err(OrchestratorError::NotRunning);
        }
        // The loop may finish on its own between the check and the send.
        let _ = self.sender.post(ControlRequest::Stop);
        self.join()
    }

    /// Block until the run ends on its own.
    pub fn wait(mut self) -> Result<RunSummary, OrchestratorError> {
        self.join()
    }

    fn join(&mut self) -> Result<RunSummary, OrchestratorError> {
        let thread = self.thread.take().ok_or(OrchestratorError::NotRunning)?;
        thread
            .join()
            .map_err(|_| OrchestratorError::Simulation("experiment thread panicked".into()))?
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    Delete,
    /// Move artifacts into a sibling `<dir>-archive-NNN` directory.
    Archive,
}

/// Clear run artifacts so the directory can take a fresh run. Returns the
/// archive location when archiving.
pub fn reset_experiment(dir: &Path, mode: ResetMode) -> Result<Option<PathBuf>, OrchestratorError> {
    if !dir.exists() {
        return Ok(None);
    }
    if dir.join(LOCK_FILE).exists() {
        return Err(OrchestratorError::RunInProgress(dir.to_path_buf()));
    }
    let entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    if entries.is_empty() {
        return Ok(None);
    }
    match mode {
        ResetMode::Delete => {
            for path in entries {
                if path.is_dir() {
                    fs::remove_dir_all(&path)?;
                } else {
                    fs::remove_file(&path)?;
                }
            }
            Ok(None)
        }
        ResetMode::Archive => {
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let parent = dir.parent().unwrap_or_else(|| Path::new("."));
            let archive = (1..)
                .map(|k| parent.join(format!("{name}-archive-{k:03}")))
                .find(|p| !p.exists())
                .expect("unbounded search");
            fs::create_dir_all(&archive)?;
            for path in entries {
                let target = archive.join(path.file_name().expect("entry has a name"));
                fs::rename(&path, &target)?;
            }
            Ok(Some(archive))
        }
    }
}

struct LogSink {
    dir: PathBuf,
    files: BTreeMap<(String, &'static str), (PathBuf, BufWriter<File>)>,
}

impl LogSink {
    fn open(&mut self, node: &str, process: &'static str, start: &DateTime<Utc>) -> Result<(), OrchestratorError> {
        let path = self.dir.join(log_file_name(node, process, start));
        let file = File::create(&path)
            .map_err(|e| OrchestratorError::OutputNotWritable(self.dir.clone(), e.to_string()))?;
        self.files
            .insert((node.to_string(), process), (path, BufWriter::new(file)));
        Ok(())
    }

    fn write(&mut self, record: &LogRecord) -> Result<(), OrchestratorError> {
        let key = (record.node.clone(), process_key(&record.process));
        let (_, w) = self
            .files
            .get_mut(&key)
            .expect("log file opened for every (node, process)");
        writeln!(w, "{record}")?;
        Ok(())
    }

    fn finish(self) -> Result<Vec<PathBuf>, OrchestratorError> {
        let mut paths = Vec::with_capacity(self.files.len());
        for (_, (path, mut w)) in self.files {
            w.flush()?;
            paths.push(path);
        }
        paths.sort();
        Ok(paths)
    }
}

fn process_key(name: &str) -> &'static str {
    match name {
        PROC_VEHICLE => PROC_VEHICLE,
        PROC_IPERF => PROC_IPERF,
        PROC_PING => PROC_PING,
        _ => PROC_EXPERIMENT,
    }
}

/// Values in log lines must not contain whitespace.
fn token(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join("_")
}

struct Engine {
    cfg: ValidatedConfig,
    dir: PathBuf,
    sink: LogSink,
    script: Vec<ScheduledCommand>,
    live: Option<Receiver<Envelope>>,
    pacing: Pacing,
    vehicle: Vehicle,
    channel: PathLossModel,
    ping: PingConfig,
    stop_requested: bool,
    rejected: usize,
}

impl Engine {
    fn prepare(
        cfg: ValidatedConfig,
        out: &Path,
        mut script: Vec<ScheduledCommand>,
        live: Option<Receiver<Envelope>>,
        pacing: Pacing,
    ) -> Result<Self, OrchestratorError> {
        let not_writable = |e: std::io::Error| OrchestratorError::OutputNotWritable(out.to_path_buf(), e.to_string());
        fs::create_dir_all(out).map_err(not_writable)?;
        if fs::read_dir(out).map_err(not_writable)?.next().is_some() {
            return Err(OrchestratorError::OutputNotEmpty(out.to_path_buf()));
        }
        fs::write(out.join(LOCK_FILE), format!("{}\n", std::process::id())).map_err(not_writable)?;

        let mut sink = LogSink {
            dir: out.to_path_buf(),
            files: BTreeMap::new(),
        };
        let c = &cfg.config;
        for node in &c.nodes {
            if node.kind == NodeKind::PortableNode {
                sink.open(&node.id, PROC_VEHICLE, &cfg.start)?;
            }
        }
        for &u in &cfg.user_equipment {
            sink.open(&c.nodes[u].id, PROC_IPERF, &cfg.start)?;
            sink.open(&c.nodes[u].id, PROC_PING, &cfg.start)?;
        }
        sink.open(&c.nodes[cfg.base_station].id, PROC_EXPERIMENT, &cfg.start)?;

        let mut channel = c.channel;
        channel.rng_seed ^= mix64(c.seed.wrapping_add(1));
        let mut ping = c.ping;
        ping.rng_seed ^= mix64(c.seed.wrapping_add(2));
        script.sort_by_key(|s| s.at_ms);

        Ok(Self {
            vehicle: Vehicle::new(c.flight_plan.clone(), c.auto_start),
            dir: out.to_path_buf(),
            sink,
            script,
            live,
            pacing,
            channel,
            ping,
            stop_requested: false,
            rejected: 0,
            cfg,
        })
    }

    fn stamp(&self, t_ms: u64) -> DateTime<Utc> {
        self.cfg.start + chrono::Duration::milliseconds(t_ms as i64)
    }

    fn experiment_record(&self, t_ms: u64) -> LogRecord {
        let bs = &self.cfg.config.nodes[self.cfg.base_station].id;
        LogRecord::new(self.stamp(t_ms), bs, PROC_EXPERIMENT)
    }

    fn status_fields(&self, t_ms: u64) -> Vec<(String, String)> {
        let s = self.vehicle.state();
        vec![
            ("mode".into(), self.vehicle.mode_name().into()),
            ("phase".into(), s.phase.to_string()),
            ("lat".into(), format!("{:.6}", s.position.latitude_deg())),
            ("lon".into(), format!("{:.6}", s.position.longitude_deg())),
            ("alt".into(), format!("{:.1}", s.position.altitude_m())),
            ("heading".into(), format!("{:.1}", s.heading_deg)),
            ("t_s".into(), format!("{:.3}", t_ms as f64 / 1000.0)),
        ]
    }

    fn handle(&mut self, request: ControlRequest, t_ms: u64) -> Result<Reply, OrchestratorError> {
        let (cmd_name, arg) = match request {
            ControlRequest::Vehicle(ConsoleCommand::Goto(i)) => ("GOTO".to_string(), Some(i)),
            other => (other.to_string(), None),
        };
        let mut rec = self.experiment_record(t_ms).field("event", "command").field("cmd", &cmd_name);
        if let Some(i) = arg {
            rec = rec.field("arg", i);
        }
        let reply = match request {
            ControlRequest::Stop => {
                self.stop_requested = true;
                Reply::Ok(String::new())
            }
            ControlRequest::Vehicle(ConsoleCommand::Status) => {
                let fields = self.status_fields(t_ms);
                let detail = fields
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                let mut status = self.experiment_record(t_ms).field("event", "status");
                status.fields.extend(fields);
                self.sink.write(&status)?;
                return Ok(Reply::Ok(detail));
            }
            ControlRequest::Vehicle(cmd) => match apply_command(cmd, &mut self.vehicle) {
                Ok(()) => Reply::Ok(String::new()),
                Err(e) => {
                    self.rejected += 1;
                    let reason = match e {
                        OrchestratorError::CommandInvalid(r) => r,
                        other => other.to_string(),
                    };
                    Reply::Err(reason)
                }
            },
        };
        rec = match &reply {
            Reply::Ok(_) => rec.field("result", "OK"),
            Reply::Err(r) => rec.field("result", "ERR").field("reason", token(r)),
        };
        self.sink.write(&rec)?;
        Ok(reply)
    }

    fn apply_pending(&mut self, t_ms: u64) -> Result<(), OrchestratorError> {
        let due = self.script.iter().take_while(|c| c.at_ms <= t_ms).count();
        let scripted: Vec<_> = self.script.drain(..due).collect();
        for cmd in scripted {
            self.handle(cmd.request, t_ms)?;
        }
        let live: Vec<Envelope> = match &self.live {
            Some(rx) => rx.try_iter().collect(),
            None => Vec::new(),
        };
        for env in live {
            let reply = self.handle(env.request, t_ms)?;
            if let Some(tx) = env.reply {
                let _ = tx.send(reply);
            }
        }
        Ok(())
    }

    fn node_snapshot(&self) -> Vec<ChannelNode> {
        let vehicle_pos = self.vehicle.state().position;
        self.cfg
            .config
            .nodes
            .iter()
            .map(|n| ChannelNode {
                id: n.id.clone(),
                position: n.position.unwrap_or(vehicle_pos),
            })
            .collect()
    }

    fn run(mut self) -> Result<RunSummary, OrchestratorError> {
        let result = self.run_loop();
        // Refuse new console requests before finalizing.
        let live = self.live.take();
        let files = self.sink.finish();
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
        if let Some(rx) = live {
            for env in rx.try_iter() {
                if let Some(tx) = env.reply {
                    let _ = tx.send(Reply::Err("experiment finished".into()));
                }
            }
        }
        let (steps, end_ms, reason) = result?;
        Ok(RunSummary {
            steps,
            end_ms,
            reason,
            files: files?,
            rejected_commands: self.rejected,
        })
    }

    fn run_loop(&mut self) -> Result<(u64, u64, EndReason), OrchestratorError> {
        let c = self.cfg.config.clone();
        let step_ms = c.step_ms;
        let subframes_per_step = step_ms / c.cell.subframe_ms as u64;
        let bs = self.cfg.base_station;
        let ues = self.cfg.user_equipment.clone();
        let ue_ids: Vec<UeId> = (0..ues.len() as u32).map(UeId).collect();
        let portable: Vec<String> = c
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::PortableNode)
            .map(|n| n.id.clone())
            .collect();

        let start_rec = self
            .experiment_record(0)
            .field("event", "start")
            .field("name", token(&c.name))
            .field("seed", c.seed)
            .field("step_ms", step_ms)
            .field("steps", self.cfg.total_steps);
        self.sink.write(&start_rec)?;
        for w in self.cfg.warnings.clone() {
            let rec = self.experiment_record(0).field("event", "warning").field("msg", token(&w));
            self.sink.write(&rec)?;
        }

        let mut scheduler = RoundRobinScheduler::new();
        let mut interval_bits = vec![0u64; ues.len()];
        let mut previous: Option<ChannelMatrix> = None;
        let wall_start = Instant::now();
        let mut steps_done = 0;
        let mut reason = EndReason::Completed;

        for k in 1..=self.cfg.total_steps {
            let t0 = (k - 1) * step_ms;
            self.apply_pending(t0)?;

            self.vehicle.advance(step_ms as f64 / 1000.0);
            let t1 = k * step_ms;

            let nodes = self.node_snapshot();
            let matrix = match channel_matrix(&nodes, &self.channel, &c.radio, c.cell.disconnect_snr_db, k) {
                Ok(m) => m,
                Err(ChannelError::CoincidentNodes(a, b)) => {
                    let rec = self
                        .experiment_record(t1)
                        .field("event", "warning")
                        .field("msg", format!("coincident_nodes_{a}_{b}_reusing_previous_links"));
                    self.sink.write(&rec)?;
                    previous.clone().ok_or_else(|| {
                        OrchestratorError::Simulation(format!("nodes {a} and {b} coincide at start"))
                    })?
                }
                Err(e) => return Err(OrchestratorError::Simulation(e.to_string())),
            };

            let links: Vec<_> = ues
                .iter()
                .map(|&u| *matrix.link(bs, u).expect("off-diagonal link"))
                .collect();
            let active: Vec<(UeId, McsSelection)> = links
                .iter()
                .zip(&ue_ids)
                .map(|(l, id)| {
                    let sel = select_mcs(l.snr_db, c.mcs_table.entries(), c.cell.disconnect_snr_db)
                        .expect("validated table");
                    (*id, sel)
                })
                .collect();
            for _ in 0..subframes_per_step {
                let alloc = scheduler.schedule(&active, &c.cell);
                for (bits, e) in interval_bits.iter_mut().zip(&alloc.entries) {
                    *bits += e.bits_delivered;
                }
            }

            let state = self.vehicle.state();
            for id in &portable {
                let rec = LogRecord::new(self.stamp(t1), id, PROC_VEHICLE)
                    .field("lat", format!("{:.6}", state.position.latitude_deg()))
                    .field("lon", format!("{:.6}", state.position.longitude_deg()))
                    .field("alt", format!("{:.1}", state.position.altitude_m()))
                    .field("phase", state.phase);
                self.sink.write(&rec)?;
            }

            if t1.is_multiple_of(self.cfg.report_interval_ms) {
                let interval_s = self.cfg.report_interval_ms as f64 / 1000.0;
                for (i, &u) in ues.iter().enumerate() {
                    let mbps = crate::mac::bits_to_mbps(interval_bits[i], interval_s);
                    let rec = LogRecord::new(self.stamp(t1), &c.nodes[u].id, PROC_IPERF)
                        .field("thrpt_mbps", format!("{mbps:.3}"))
                        .field("mcs", active[i].1)
                        .field("snr_db", format!("{:.1}", links[i].snr_db))
                        .field("dist_m", format!("{:.1}", links[i].distance_m));
                    self.sink.write(&rec)?;
                }
                interval_bits.iter_mut().for_each(|b| *b = 0);
            }

            if t1.is_multiple_of(self.cfg.ping_interval_ms) {
                for (i, &u) in ues.iter().enumerate() {
                    let margin = links[i].snr_db - c.cell.disconnect_snr_db;
                    let sample = ping_rtt(&links[i], margin, &self.ping, ue_ids[i], k, t1 as f64 / 1000.0);
                    let rtt = match sample.rtt {
                        Rtt::Millis(v) => format!("{v:.2}"),
                        Rtt::Timeout => "timeout".into(),
                    };
                    let rec = LogRecord::new(self.stamp(t1), &c.nodes[u].id, PROC_PING)
                        .field("rtt_ms", rtt)
                        .field("dist_m", format!("{:.1}", sample.distance_m));
                    self.sink.write(&rec)?;
                }
            }

            previous = Some(matrix);
            steps_done = k;

            if let Pacing::Realtime { speedup } = self.pacing {
                let target = wall_start + Duration::from_secs_f64(t1 as f64 / 1000.0 / speedup);
                let now = Instant::now();
                if target > now {
                    thread::sleep(target - now);
                }
                // Commands that arrived while sleeping take effect at this boundary.
                if let Some(rx) = &self.live {
                    let pending: Vec<Envelope> = rx.try_iter().collect();
                    for env in pending {
                        let reply = self.handle(env.request, t1)?;
                        if let Some(tx) = env.reply {
                            let _ = tx.send(reply);
                        }
                    }
                }
            }
            if self.stop_requested {
                reason = EndReason::Stopped;
                break;
            }
        }

        let end_ms = steps_done * step_ms;
        let end = self
            .experiment_record(end_ms)
            .field("event", "end")
            .field("reason", reason)
            .field("steps", steps_done)
            .field("rejected_commands", self.rejected);
        self.sink.write(&end)?;
        Ok((steps_done, end_ms, reason))
    }
}
