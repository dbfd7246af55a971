use super::{CsvTable, PostprocError, PostprocWarning, TIME_COLUMN};

/// Half the smallest positive spacing between consecutive timestamps of any
/// table; zero when no table has two distinct timestamps.
pub fn default_tolerance(tables: &[CsvTable]) -> f64 {
    let mut min = f64::INFINITY;
    for t in tables {
        let mut times = t.times();
        times.sort_by(f64::total_cmp);
        for w in times.windows(2) {
            let d = w[1] - w[0];
            if d > 0.0 && d < min {
                min = d;
            }
        }
    }
    if min.is_finite() {
        0.5 * min
    } else {
        0.0
    }
}

/// Join tables on nearest `t_s`. Tables are folded left to right: each row
/// of the next table attaches to its nearest row of the accumulated table
/// when within `tolerance` seconds, one-to-one, the closest claimant winning.
/// Rows that find no partner are kept with empty cells. Column names already
/// taken get the suffix `_<n>`, `n` being the 1-based table position.
pub fn merge_csv(
    tables: &[CsvTable],
    tolerance: Option<f64>,
) -> Result<(CsvTable, Vec<PostprocWarning>), PostprocError> {
    let first = tables.first().ok_or(PostprocError::NoTables)?;
    let tol = tolerance.unwrap_or_else(|| default_tolerance(tables));
    let mut warnings = Vec::new();
    let mut acc = sorted(first);
    for (i, next) in tables.iter().enumerate().skip(1) {
        let next = sorted(next);
        if !acc.is_empty() && !next.is_empty() && !overlaps(&acc, &next) {
            warnings.push(PostprocWarning::NoCommonTimespan { table: i + 1 });
        }
        acc = join(&acc, &next, i + 1, tol);
    }
    Ok((acc, warnings))
}

fn sorted(t: &CsvTable) -> CsvTable {
    let times = t.times();
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let rows = order.into_iter().map(|i| t.rows()[i].clone()).collect();
    CsvTable::new(t.headers().to_vec(), rows).expect("same shape")
}

fn overlaps(a: &CsvTable, b: &CsvTable) -> bool {
    let (a0, a1) = (a.time(0), a.time(a.len() - 1));
    let (b0, b1) = (b.time(0), b.time(b.len() - 1));
    a0 <= b1 && b0 <= a1
}

/// Index of the row of sorted `times` nearest to `t`; earlier row on ties.
fn nearest(times: &[f64], t: f64) -> Option<usize> {
    let hi = times.partition_point(|&x| x < t);
    let below = hi.checked_sub(1);
    let above = (hi < times.len()).then_some(hi);
    match (below, above) {
        (Some(b), Some(a)) => Some(if t - times[b] <= times[a] - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

fn join(a: &CsvTable, b: &CsvTable, table_no: usize, tol: f64) -> CsvTable {
    let mut headers = a.headers().to_vec();
    for h in &b.headers()[1..] {
        let name = if headers.contains(h) {
            format!("{h}_{table_no}")
        } else {
            h.clone()
        };
        headers.push(name);
    }
    let a_width = a.headers().len();

    let a_times = a.times();
    // claims[i] = (b row, |dt|) currently attached to a row i.
    let mut claims: Vec<Option<(usize, f64)>> = vec![None; a.len()];
    for (j, t) in b.times().into_iter().enumerate() {
        let Some(i) = nearest(&a_times, t) else { continue };
        let dt = (a_times[i] - t).abs();
        if dt > tol {
            continue;
        }
        match claims[i] {
            Some((_, best)) if best <= dt => {}
            _ => claims[i] = Some((j, dt)),
        }
    }

    let mut matched = vec![false; b.len()];
    let mut rows: Vec<(f64, Vec<String>)> = Vec::with_capacity(a.len() + b.len());
    for (i, claim) in claims.iter().enumerate() {
        let mut row = a.rows()[i].clone();
        match claim {
            Some((j, _)) => {
                matched[*j] = true;
                row.extend_from_slice(&b.rows()[*j][1..]);
            }
            None => row.extend(std::iter::repeat_n(String::new(), b.headers().len() - 1)),
        }
        rows.push((a_times[i], row));
    }
    for (j, m) in matched.iter().enumerate() {
        if !m {
            let mut row = vec![String::new(); a_width];
            row[0] = b.cell(j, 0).to_string();
            row.extend_from_slice(&b.rows()[j][1..]);
            rows.push((b.time(j), row));
        }
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    debug_assert_eq!(headers[0], TIME_COLUMN);
    CsvTable::new(headers, rows.into_iter().map(|(_, r)| r).collect()).expect("rectangular join")
}
