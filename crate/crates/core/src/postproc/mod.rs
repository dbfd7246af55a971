//! Offline analysis of run logs: log-to-CSV conversion, time-aligned merging,
//! color-coded KML tracks and dual-axis plot data.

mod kml;
mod logcsv;
mod merge;
mod plot;

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use kml::{color_for, generate_kml, ColorScale, COLOR_STEPS};
pub use logcsv::{log_to_table, logs_to_csv, CsvConversion};
pub use merge::{default_tolerance, merge_csv};
pub use plot::{plot_series, PlotData};

/// Name of the mandatory first column: seconds since run start.
pub const TIME_COLUMN: &str = "t_s";

#[derive(Debug, Error)]
pub enum PostprocError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("table is not rectangular: row {row} has {found} cells, header has {expected}")]
    NotRectangular { row: usize, found: usize, expected: usize },
    #[error("bad value `{value}` in column `{column}`")]
    BadValue { column: String, value: String },
    #[error("color scale max {max} is below min {min}")]
    InvalidScale { min: f64, max: f64 },
    #[error("no input tables")]
    NoTables,
    #[error("no log files in {0}")]
    NoLogs(PathBuf),
}

/// Non-fatal findings; the operation still produced output.
#[derive(Debug, Clone, PartialEq)]
pub enum PostprocWarning {
    MalformedLine {
        file: String,
        line: usize,
        reason: String,
    },
    NoCommonTimespan {
        table: usize,
    },
}

impl fmt::Display for PostprocWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostprocWarning::MalformedLine { file, line, reason } => {
                write!(f, "{file}:{line}: malformed line skipped ({reason})")
            }
            PostprocWarning::NoCommonTimespan { table } => {
                write!(f, "table {table} shares no time span with the tables before it")
            }
        }
    }
}

/// Rectangular string table whose first column is [`TIME_COLUMN`]. Cells
/// keep their source text so numbers retain the precision they were logged at.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self, PostprocError> {
        if headers.first().map(String::as_str) != Some(TIME_COLUMN) {
            return Err(PostprocError::MissingColumn(TIME_COLUMN.into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != headers.len() {
                return Err(PostprocError::NotRectangular {
                    row: i,
                    found: r.len(),
                    expected: headers.len(),
                });
            }
            if r[0].parse::<f64>().map_or(true, |t| !t.is_finite()) {
                return Err(PostprocError::BadValue {
                    column: TIME_COLUMN.into(),
                    value: r[0].clone(),
                });
            }
        }
        Ok(Self { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require(&self, name: &str) -> Result<usize, PostprocError> {
        self.column(name)
            .ok_or_else(|| PostprocError::MissingColumn(name.to_string()))
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// Cell parsed as a finite number; `None` for blanks and non-numeric text.
    pub fn number(&self, row: usize, col: usize) -> Option<f64> {
        self.rows[row][col].parse::<f64>().ok().filter(|v| v.is_finite())
    }

    pub fn time(&self, row: usize) -> f64 {
        self.rows[row][0].parse().expect("validated t_s")
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.rows.len()).map(|r| self.time(r)).collect()
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, PostprocError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let headers = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        Self::new(headers, rows)
    }

    pub fn read(path: &Path) -> Result<Self, PostprocError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<(), PostprocError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("cells are UTF-8")
    }

    pub fn write(&self, path: &Path) -> Result<(), PostprocError> {
        let file = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(file))
    }
}
