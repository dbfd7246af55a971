use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

use super::{CsvTable, PostprocError, PostprocWarning, TIME_COLUMN};
use crate::orchestrator::log::split_log_file_name;
use crate::orchestrator::LogRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvConversion {
    /// Written CSV files with their row counts.
    pub outputs: Vec<(PathBuf, usize)>,
    pub warnings: Vec<PostprocWarning>,
}

impl CsvConversion {
    pub fn is_partial(&self) -> bool {
        self.warnings
            .iter()
            .any(|w| matches!(w, PostprocWarning::MalformedLine { .. }))
    }
}

fn seconds_since(start: &DateTime<Utc>, t: &DateTime<Utc>) -> String {
    let ms = (*t - *start).num_milliseconds();
    let sign = if ms < 0 { "-" } else { "" };
    let ms = ms.unsigned_abs();
    format!("{sign}{}.{:03}", ms / 1000, ms % 1000)
}

/// Convert one log's text to a table. Time is measured from `run_start`, or
/// from the first valid record when absent. Columns appear in first-seen
/// key order; a record lacking a key gets an empty cell.
pub fn log_to_table(
    text: &str,
    file: &str,
    run_start: Option<DateTime<Utc>>,
) -> (CsvTable, Vec<PostprocWarning>) {
    let mut warnings = Vec::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match LogRecord::parse(line) {
            Ok(r) => records.push(r),
            Err(e) => warnings.push(PostprocWarning::MalformedLine {
                file: file.to_string(),
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }

    let mut headers = vec![TIME_COLUMN.to_string()];
    for r in &records {
        for (k, _) in &r.fields {
            if !headers.iter().any(|h| h == k) {
                headers.push(k.clone());
            }
        }
    }
    let start = run_start.or_else(|| records.first().map(|r| r.timestamp));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![String::new(); headers.len()];
            row[0] = seconds_since(start.as_ref().expect("records exist"), &r.timestamp);
            for (k, v) in &r.fields {
                let col = headers.iter().position(|h| h == k).expect("collected above");
                row[col] = v.clone();
            }
            row
        })
        .collect();
    let table = CsvTable::new(headers, rows).expect("built rectangular");
    (table, warnings)
}

/// Convert every `<node>_<process>_<stamp>.log` in `log_dir` into
/// `<node>_<process>.csv` in `out_dir`.
pub fn logs_to_csv(log_dir: &Path, out_dir: &Path) -> Result<CsvConversion, PostprocError> {
    let mut logs = BTreeMap::new();
    for entry in fs::read_dir(log_dir)? {
        let path = entry?.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n.to_string(),
            None => continue,
        };
        if let Some((node, process, stamp)) = split_log_file_name(&name) {
            logs.insert(name, (path, node, process, stamp));
        }
    }
    if logs.is_empty() {
        return Err(PostprocError::NoLogs(log_dir.to_path_buf()));
    }
    fs::create_dir_all(out_dir)?;

    let mut outputs = Vec::new();
    let mut warnings = Vec::new();
    for (name, (path, node, process, stamp)) in logs {
        let text = fs::read_to_string(&path)?;
        let (table, w) = log_to_table(&text, &name, Some(stamp));
        let out = out_dir.join(format!("{node}_{process}.csv"));
        table.write(&out)?;
        outputs.push((out, table.len()));
        warnings.extend(w);
    }
    Ok(CsvConversion { outputs, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::log::parse_timestamp;

    const VEHICLE: &str = "\
2025-01-01T12:00:00.100Z LPN1 vehicle lat=35.720000 lon=-78.690000 alt=30.0 phase=Enroute
2025-01-01T12:00:00.200Z LPN1 vehicle lat=35.720010 lon=-78.690000 alt=30.0 phase=Enroute
";

    #[test]
    fn one_row_per_record() {
        let start = parse_timestamp("2025-01-01T12:00:00.000Z").ok();
        let (t, w) = log_to_table(VEHICLE, "v.log", start);
        assert!(w.is_empty());
        assert_eq!(t.headers(), ["t_s", "lat", "lon", "alt", "phase"]);
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[1], ["0.200", "35.720010", "-78.690000", "30.0", "Enroute"]);
    }

    #[test]
    fn empty_log_is_header_only() {
        let (t, w) = log_to_table("", "e.log", None);
        assert!(w.is_empty());
        assert_eq!(t.headers(), ["t_s"]);
        assert!(t.is_empty());
        assert_eq!(t.to_csv_string(), "t_s\n");
    }

    #[test]
    fn corrupt_line_is_skipped_and_named() {
        let text = format!("{VEHICLE}garbage here\n");
        let (t, w) = log_to_table(&text, "v.log", None);
        assert_eq!(t.len(), 2);
        assert!(matches!(&w[..], [PostprocWarning::MalformedLine { line: 3, .. }]));
        // Without an explicit start, time counts from the first record.
        assert_eq!(t.cell(0, 0), "0.000");
    }

    #[test]
    fn unknown_keys_become_columns() {
        let text = "\
2025-01-01T12:00:01.000Z LW1 iperf thrpt_mbps=25.200
2025-01-01T12:00:02.000Z LW1 iperf thrpt_mbps=16.800 extra=7
";
        let (t, _) = log_to_table(text, "i.log", None);
        assert_eq!(t.headers(), ["t_s", "thrpt_mbps", "extra"]);
        assert_eq!(t.rows()[0], ["0.000", "25.200", ""]);
        assert_eq!(t.rows()[1], ["1.000", "16.800", "7"]);
    }
}
