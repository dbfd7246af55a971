use std::fmt::Write;

use super::{CsvTable, PostprocError};

/// Number of discrete colors between the green and red endpoints.
pub const COLOR_STEPS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorScale {
    pub min: f64,
    pub max: f64,
}

impl ColorScale {
    pub fn new(min: f64, max: f64) -> Result<Self, PostprocError> {
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(PostprocError::InvalidScale { min, max });
        }
        Ok(Self { min, max })
    }

    /// Color step for `value`, clamped into the scale.
    pub fn step(&self, value: f64) -> u32 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0;
        }
        let frac = ((value - self.min) / span).clamp(0.0, 1.0);
        (frac * f64::from(COLOR_STEPS - 1)).round() as u32
    }
}

/// `aabbggrr` color of step `step`: `ff00ff00` at 0 through `ff0000ff` at 15.
pub fn color_for(step: u32) -> String {
    let step = step.min(COLOR_STEPS - 1);
    let red = 17 * step;
    let green = 255 - red;
    format!("ff00{green:02x}{red:02x}")
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Render rows carrying a position and a numeric `metric` as colored point
/// placemarks. Rows with a blank or non-numeric cell in any of those columns
/// are left out. Without `scale` the observed metric range is used.
pub fn generate_kml(
    table: &CsvTable,
    metric: &str,
    scale: Option<ColorScale>,
) -> Result<String, PostprocError> {
    let lat = table.require("lat")?;
    let lon = table.require("lon")?;
    let alt = table.require("alt")?;
    let m = table.require(metric)?;

    let kept: Vec<(usize, f64)> = (0..table.len())
        .filter(|&r| [lat, lon, alt].iter().all(|&c| table.number(r, c).is_some()))
        .filter_map(|r| table.number(r, m).map(|v| (r, v)))
        .collect();
    let scale = match scale {
        Some(s) => s,
        None => {
            let lo = kept.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
            let hi = kept.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
            if kept.is_empty() {
                ColorScale { min: 0.0, max: 0.0 }
            } else {
                ColorScale::new(lo, hi)?
            }
        }
    };

    let mut doc = String::new();
    doc.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    doc.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n");
    let _ = writeln!(doc, "<name>{}</name>", escape(metric));
    let _ = writeln!(
        doc,
        "<description>{} from {} (green) to {} (red)</description>",
        escape(metric),
        scale.min,
        scale.max
    );
    for step in 0..COLOR_STEPS {
        let _ = writeln!(
            doc,
            "<Style id=\"c{step}\"><IconStyle><color>{}</color><scale>0.6</scale></IconStyle></Style>",
            color_for(step)
        );
    }
    for (r, value) in kept {
        let _ = writeln!(
            doc,
            "<Placemark><name>{t}</name><description>{metric}={v}</description><styleUrl>#c{step}</styleUrl>\
             <Point><altitudeMode>relativeToGround</altitudeMode><coordinates>{lon},{lat},{alt}</coordinates></Point></Placemark>",
            t = escape(table.cell(r, 0)),
            metric = escape(metric),
            v = escape(table.cell(r, m)),
            step = scale.step(value),
            lon = escape(table.cell(r, lon)),
            lat = escape(table.cell(r, lat)),
            alt = escape(table.cell(r, alt)),
        );
    }
    doc.push_str("</Document>\n</kml>\n");
    Ok(doc)
}
