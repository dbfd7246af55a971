//! Operator console: command vocabulary, the line protocol, and a small TCP
//! front end that forwards commands into a running experiment.
//!
//! One command per line (`GOTO 0`, `HOLD`, `STATUS`, ...). Every line gets
//! exactly one reply line, `OK [detail]` or `ERR <reason>`.

use std::fmt;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::OrchestratorError;
use crate::flightsim::{ManeuverError, Vehicle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsoleCommand {
    Takeoff,
    Goto(usize),
    Hold,
    ResumeMission,
    Land,
    Abort,
    Status,
}

/// Anything the console can ask of a running experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlRequest {
    Vehicle(ConsoleCommand),
    Stop,
}

impl FromStr for ControlRequest {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut words = line.split_whitespace();
        let verb = words.next().ok_or_else(|| "empty command".to_string())?;
        let arg = words.next();
        if words.next().is_some() {
            return Err("too many arguments".into());
        }
        let no_arg = |cmd: ControlRequest| match arg {
            None => Ok(cmd),
            Some(_) => Err(format!("{} takes no argument", verb.to_ascii_uppercase())),
        };
        use ConsoleCommand::*;
        match verb.to_ascii_uppercase().as_str() {
            "TAKEOFF" => no_arg(ControlRequest::Vehicle(Takeoff)),
            "GOTO" => {
                let idx = arg
                    .ok_or_else(|| "GOTO needs a waypoint index".to_string())?
                    .parse::<usize>()
                    .map_err(|_| "GOTO index must be a non-negative integer".to_string())?;
                Ok(ControlRequest::Vehicle(Goto(idx)))
            }
            "HOLD" => no_arg(ControlRequest::Vehicle(Hold)),
            "RESUME" | "RESUMEMISSION" => no_arg(ControlRequest::Vehicle(ResumeMission)),
            "LAND" => no_arg(ControlRequest::Vehicle(Land)),
            "ABORT" => no_arg(ControlRequest::Vehicle(Abort)),
            "STATUS" => no_arg(ControlRequest::Vehicle(Status)),
            "STOP" => no_arg(ControlRequest::Stop),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

impl fmt::Display for ControlRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ConsoleCommand::*;
        match self {
            ControlRequest::Stop => f.write_str("STOP"),
            ControlRequest::Vehicle(Takeoff) => f.write_str("TAKEOFF"),
            ControlRequest::Vehicle(Goto(i)) => write!(f, "GOTO {i}"),
            ControlRequest::Vehicle(Hold) => f.write_str("HOLD"),
            ControlRequest::Vehicle(ResumeMission) => f.write_str("RESUME"),
            ControlRequest::Vehicle(Land) => f.write_str("LAND"),
            ControlRequest::Vehicle(Abort) => f.write_str("ABORT"),
            ControlRequest::Vehicle(Status) => f.write_str("STATUS"),
        }
    }
}

/// A command pinned to a simulation time, for scripted runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledCommand {
    pub at_ms: u64,
    pub request: ControlRequest,
}

/// Parse a command script: one `<seconds> <COMMAND>` per line, `#` comments.
pub fn parse_command_script(text: &str) -> Result<Vec<ScheduledCommand>, OrchestratorError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| OrchestratorError::CommandInvalid(format!("line {}: {msg}", n + 1));
        let (at, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| bad("expected `<seconds> <COMMAND>`".into()))?;
        let seconds: f64 = at.parse().map_err(|_| bad(format!("bad time `{at}`")))?;
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(bad(format!("bad time `{at}`")));
        }
        let request = rest.parse().map_err(bad)?;
        out.push(ScheduledCommand {
            at_ms: (seconds * 1000.0).round() as u64,
            request,
        });
    }
    out.sort_by_key(|c| c.at_ms);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Ok(String),
    Err(String),
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Ok(detail) if detail.is_empty() => f.write_str("OK"),
            Reply::Ok(detail) => write!(f, "OK {detail}"),
            Reply::Err(reason) => write!(f, "ERR {reason}"),
        }
    }
}

pub(crate) struct Envelope {
    pub request: ControlRequest,
    pub reply: Option<Sender<Reply>>,
}

/// Feeds commands into a running experiment. Commands are applied in arrival
/// order at the next step boundary.
#[derive(Clone)]
pub struct CommandSender(pub(crate) Sender<Envelope>);

impl CommandSender {
    pub(crate) fn channel() -> (Self, Receiver<Envelope>) {
        let (tx, rx) = mpsc::channel();
        (Self(tx), rx)
    }

    /// Queue a request without waiting for its outcome.
    pub fn post(&self, request: ControlRequest) -> Result<(), OrchestratorError> {
        self.0
            .send(Envelope {
                request,
                reply: None,
            })
            .map_err(|_| OrchestratorError::NotRunning)
    }

    /// Queue a request and block until the experiment has applied it.
    pub fn send(&self, request: ControlRequest) -> Result<Reply, OrchestratorError> {
        let (tx, rx) = mpsc::channel();
        self.0
            .send(Envelope {
                request,
                reply: Some(tx),
            })
            .map_err(|_| OrchestratorError::NotRunning)?;
        rx.recv().map_err(|_| OrchestratorError::NotRunning)
    }
}

/// Apply one vehicle command. `Status` never changes state.
pub fn apply_command(cmd: ConsoleCommand, vehicle: &mut Vehicle) -> Result<(), OrchestratorError> {
    let result = match cmd {
        ConsoleCommand::Takeoff => vehicle.takeoff(),
        ConsoleCommand::Goto(i) => vehicle.goto(i),
        ConsoleCommand::Hold => vehicle.hold(),
        ConsoleCommand::ResumeMission => vehicle.resume(),
        ConsoleCommand::Land => vehicle.land(),
        ConsoleCommand::Abort => vehicle.abort(),
        ConsoleCommand::Status => Ok(()),
    };
    result.map_err(|e: ManeuverError| OrchestratorError::CommandInvalid(e.to_string()))
}

/// Background TCP listener speaking the line protocol.
pub struct ConsoleServer {
    addr: std::net::SocketAddr,
    shutdown: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ConsoleServer {
    pub fn bind(addr: impl ToSocketAddrs, sender: CommandSender) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let thread = thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let sender = sender.clone();
                        thread::spawn(move || {
                            if let Err(e) = handle_connection(stream, sender) {
                                log::debug!("console connection closed: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(20));
                    }
                    Err(e) => {
                        log::warn!("console accept failed: {e}");
                        break;
                    }
                }
            }
        });
        Ok(Self {
            addr,
            shutdown,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_thread();
    }

    fn stop_thread(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ConsoleServer {
    fn drop(&mut self) {
        self.stop_thread();
    }
}

fn handle_connection(stream: TcpStream, sender: CommandSender) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match line.parse::<ControlRequest>() {
            Ok(req) => sender
                .send(req)
                .unwrap_or_else(|_| Reply::Err("experiment not running".into())),
            Err(reason) => Reply::Err(reason),
        };
        writeln!(writer, "{reply}")?;
        writer.flush()?;
    }
    Ok(())
}

/// Relay lines from `input` to a console server and echo each reply.
pub fn run_console_client(
    addr: impl ToSocketAddrs,
    input: impl BufRead,
    mut output: impl Write,
) -> io::Result<()> {
    let stream = TcpStream::connect(addr)?;
    let mut writer = stream.try_clone()?;
    let mut replies = BufReader::new(stream).lines();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", line.trim())?;
        writer.flush()?;
        match replies.next() {
            Some(reply) => writeln!(output, "{}", reply?)?,
            None => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "console closed")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_protocol_lines() {
        assert_eq!("GOTO 0".parse(), Ok(ControlRequest::Vehicle(ConsoleCommand::Goto(0))));
        assert_eq!("hold".parse(), Ok(ControlRequest::Vehicle(ConsoleCommand::Hold)));
        assert_eq!("  STATUS ".parse(), Ok(ControlRequest::Vehicle(ConsoleCommand::Status)));
        assert_eq!("STOP".parse(), Ok(ControlRequest::Stop));
        assert!("GOTO".parse::<ControlRequest>().is_err());
        assert!("GOTO -1".parse::<ControlRequest>().is_err());
        assert!("HOLD 3".parse::<ControlRequest>().is_err());
        assert!("FLIP".parse::<ControlRequest>().is_err());
        for req in ["TAKEOFF", "GOTO 4", "HOLD", "RESUME", "LAND", "ABORT", "STATUS", "STOP"] {
            assert_eq!(req.parse::<ControlRequest>().unwrap().to_string(), req);
        }
    }

    #[test]
    fn parses_scripts() {
        let s = parse_command_script("# demo\n5.0 HOLD\n2 GOTO 1   # early\n\n9.5 RESUME\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].at_ms, 2000);
        assert_eq!(s[2].request, ControlRequest::Vehicle(ConsoleCommand::ResumeMission));
        assert!(parse_command_script("soon HOLD").is_err());
        assert!(parse_command_script("1.0 JUMP").is_err());
    }

    #[test]
    fn reply_format() {
        assert_eq!(Reply::Ok(String::new()).to_string(), "OK");
        assert_eq!(Reply::Ok("phase=Enroute".into()).to_string(), "OK phase=Enroute");
        assert_eq!(Reply::Err("vehicle has landed".into()).to_string(), "ERR vehicle has landed");
    }
}
