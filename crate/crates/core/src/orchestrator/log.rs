//! Timestamped `key=value` log lines.
//!
//! ```text
//! 2025-01-01T12:00:00.100Z LPN1 vehicle lat=35.720000 lon=-78.690000 alt=30.0 phase=Enroute
//! ```

use std::fmt;

use chrono::{DateTime, NaiveDateTime, Utc};
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.3fZ";
/// Compact form used in log file names.
pub const FILE_STAMP_FORMAT: &str = "%Y%m%dT%H%M%SZ";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogParseError {
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("bad timestamp `{0}`")]
    Timestamp(String),
    #[error("field `{0}` is not key=value")]
    Field(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub timestamp: DateTime<Utc>,
    pub node: String,
    pub process: String,
    pub fields: Vec<(String, String)>,
}

impl LogRecord {
    pub fn new(timestamp: DateTime<Utc>, node: &str, process: &str) -> Self {
        Self {
            timestamp,
            node: node.to_string(),
            process: process.to_string(),
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse(line: &str) -> Result<Self, LogParseError> {
        let mut tokens = line.split_whitespace();
        let ts = tokens.next().ok_or(LogParseError::Missing("timestamp"))?;
        let timestamp = parse_timestamp(ts)?;
        let node = tokens.next().ok_or(LogParseError::Missing("node"))?;
        let process = tokens.next().ok_or(LogParseError::Missing("process"))?;
        let fields = tokens
            .map(|tok| match tok.split_once('=') {
                Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
                _ => Err(LogParseError::Field(tok.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            timestamp,
            node: node.to_string(),
            process: process.to_string(),
            fields,
        })
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.timestamp.format(TIMESTAMP_FORMAT),
            self.node,
            self.process
        )?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, LogParseError> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map(|n| n.and_utc())
        .map_err(|_| LogParseError::Timestamp(s.to_string()))
}

pub fn parse_file_stamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, FILE_STAMP_FORMAT)
        .ok()
        .map(|n| n.and_utc())
}

/// `<node>_<process>_<stamp>.log`
pub fn log_file_name(node: &str, process: &str, start: &DateTime<Utc>) -> String {
    format!("{node}_{process}_{}.log", start.format(FILE_STAMP_FORMAT))
}

/// Inverse of [`log_file_name`].
pub fn split_log_file_name(name: &str) -> Option<(String, String, DateTime<Utc>)> {
    let stem = name.strip_suffix(".log")?;
    let mut parts = stem.rsplitn(3, '_');
    let stamp = parse_file_stamp(parts.next()?)?;
    let process = parts.next()?;
    let node = parts.next()?;
    Some((node.to_string(), process.to_string(), stamp))
}
