use std::fmt::Write;

use super::{CsvTable, PostprocError};
use crate::geodesy::{haversine_distance, GeoPosition};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 730.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 350.0;

/// Metric (scatter, left axis) and ground distance to a reference point
/// (line, right axis) against time.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub metric: String,
    pub t_s: Vec<f64>,
    /// `None` where the row carries no numeric metric value.
    pub values: Vec<Option<f64>>,
    pub distance_m: Vec<f64>,
}

/// Build plot series from every row with a position. Rows lacking `lat` or
/// `lon` values are skipped.
pub fn plot_series(
    table: &CsvTable,
    metric: &str,
    reference: &GeoPosition,
) -> Result<PlotData, PostprocError> {
    let lat = table.require("lat")?;
    let lon = table.require("lon")?;
    let m = table.require(metric)?;
    let mut data = PlotData {
        metric: metric.to_string(),
        t_s: Vec::new(),
        values: Vec::new(),
        distance_m: Vec::new(),
    };
    for r in 0..table.len() {
        let (Some(la), Some(lo)) = (table.number(r, lat), table.number(r, lon)) else {
            continue;
        };
        let p = GeoPosition::new(la, lo, 0.0).map_err(|_| PostprocError::BadValue {
            column: "lat/lon".into(),
            value: format!("{la},{lo}"),
        })?;
        data.t_s.push(table.time(r));
        data.values.push(table.number(r, m));
        data.distance_m.push(haversine_distance(&p, reference));
    }
    Ok(data)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn scale(v: f64, (lo, hi): (f64, f64), out_lo: f64, out_hi: f64) -> f64 {
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

impl PlotData {
    pub fn len(&self) -> usize {
        self.t_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_s.is_empty()
    }

    /// `t_s,<metric>,dist_m`; blank metric cells where the row had none.
    pub fn to_csv(&self) -> String {
        let mut out = format!("t_s,{},dist_m\n", self.metric);
        for i in 0..self.len() {
            let v = self.values[i].map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{:.3},{},{:.3}", self.t_s[i], v, self.distance_m[i]);
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let tr = range(self.t_s.iter().copied());
        let mr = range(self.values.iter().flatten().copied());
        let dr = range(self.distance_m.iter().copied());
        let x = |t: f64| scale(t, tr, LEFT, RIGHT);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
        );
        svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        let _ = writeln!(
            svg,
            "<g stroke=\"black\" fill=\"none\"><line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\"/>\
             <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\"/>\
             <line x1=\"{RIGHT}\" y1=\"{TOP}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\"/></g>"
        );
        let _ = writeln!(
            svg,
            "<g font-family=\"sans-serif\" font-size=\"11\">\
             <text x=\"400\" y=\"385\" text-anchor=\"middle\">time (s): {:.1} to {:.1}</text>\
             <text x=\"{LEFT}\" y=\"20\" fill=\"blue\">{}: {:.2} to {:.2}</text>\
             <text x=\"{RIGHT}\" y=\"20\" fill=\"red\" text-anchor=\"end\">distance (m): {:.1} to {:.1}</text></g>",
            tr.0, tr.1, self.metric, mr.0, mr.1, dr.0, dr.1
        );

        svg.push_str("<g fill=\"blue\">\n");
        for (t, v) in self.t_s.iter().zip(&self.values) {
            if let Some(v) = v {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\"/>",
                    x(*t),
                    scale(*v, mr, BOTTOM, TOP)
                );
            }
        }
        svg.push_str("</g>\n<polyline fill=\"none\" stroke=\"red\" stroke-width=\"1.5\" points=\"");
        for (i, (t, d)) in self.t_s.iter().zip(&self.distance_m).enumerate() {
            if i > 0 {
                svg.push(' ');
            }
            let _ = write!(svg, "{:.2},{:.2}", x(*t), scale(*d, dr, BOTTOM, TOP));
        }
        svg.push_str("\"/>\n</svg>\n");
        svg
    }
}
