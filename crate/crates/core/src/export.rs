//! Writing runs to disk: trajectory CSV, metrics JSON, and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::geometry::Vec2;
use crate::grid::ActuatorGrid;
use crate::metrics::Metrics;
use crate::runner::{Record, RunLog, TickLog};

pub const CSV_HEADER: &str = "t,object,x,y,z,module,mode,phase";

/// Writes `bytes` next to `path` and renames it into place, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = PathBuf::from(path);
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    tmp.set_file_name(name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn records_to_csv(records: &[Record]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn records_from_csv(data: &[u8]) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_reader(data);
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<Record>, _>>()?)
}

pub fn write_csv(log: &RunLog, path: &Path) -> Result<()> {
    write_atomic(path, &records_to_csv(&log.records)?)
}

/// Reads a trajectory CSV back into a log. The scenario name is taken from
/// the file stem up to the first `.`; ticks and events are not stored in
/// the CSV and come back empty.
pub fn read_csv(path: &Path) -> Result<RunLog> {
    let records = records_from_csv(&fs::read(path)?)?;
    let scenario = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.split('.').next())
        .unwrap_or_default()
        .to_string();
    Ok(RunLog {
        scenario,
        records,
        ..Default::default()
    })
}

/// Actuator commands and heights per control tick, one row per actuator.
pub fn ticks_to_csv(ticks: &[TickLog]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "actuator", "command", "height"])?;
    for tick in ticks {
        for (i, (c, h)) in tick.commands.iter().zip(&tick.heights).enumerate() {
            w.write_record([
                tick.t.to_string(),
                i.to_string(),
                c.to_string(),
                h.to_string(),
            ])?;
        }
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn metrics_to_json(metrics: &Metrics) -> Result<String> {
    let mut s = serde_json::to_string_pretty(metrics)?;
    s.push('\n');
    Ok(s)
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

const PX_PER_M: f64 = 400.0;
const MARGIN: f64 = 20.0;

struct Canvas {
    lo: Vec2,
    hi: Vec2,
}

impl Canvas {
    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.lo.x) * PX_PER_M
    }

    // SVG y grows downwards; flip so +y points up.
    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.hi.y - y) * PX_PER_M
    }

    fn len(&self, d: f64) -> f64 {
        d * PX_PER_M
    }
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = Vec::with_capacity(10);
    for k in 0..10 {
        let radius = if k % 2 == 0 { r } else { r * 0.45 };
        let a = std::f64::consts::PI * (k as f64) / 5.0 - std::f64::consts::FRAC_PI_2;
        pts.push(format!(
            "{:.2},{:.2}",
            cx + radius * a.cos(),
            cy + radius * a.sin()
        ));
    }
    pts.join(" ")
}

const COLORS: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

/// Top view of a run: module grid, one polyline per object, a green circle
/// at each start, a red star at each target and a red circle of
/// `threshold` radius around it.
pub fn render_svg(
    grid: &ActuatorGrid,
    records: &[Record],
    targets: &[Vec2],
    threshold: f64,
) -> String {
    let (lo, hi) = grid.bounds();
    let c = Canvas { lo, hi };
    let width = c.len(hi.x - lo.x) + 2.0 * MARGIN;
    let height = c.len(hi.y - lo.y) + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for m in grid.modules() {
        let min = grid.module_min_corner(m);
        let side = c.len(grid.spacing());
        let _ = writeln!(
            s,
            r##"<rect class="module" x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="none" stroke="#bbbbbb"/>"##,
            c.x(min.x),
            c.y(min.y + grid.spacing()),
        );
    }

    let mut ids: Vec<usize> = records.iter().map(|r| r.object).collect();
    ids.sort_unstable();
    ids.dedup();
    for (n, id) in ids.iter().enumerate() {
        let pts: Vec<String> = records
            .iter()
            .filter(|r| r.object == *id)
            .map(|r| format!("{:.2},{:.2}", c.x(r.x), c.y(r.y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="trajectory" data-object="{id}" points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            COLORS[n % COLORS.len()]
        );
    }
    for id in &ids {
        if let Some(first) = records.iter().find(|r| r.object == *id) {
            let _ = writeln!(
                s,
                r#"<circle class="start" data-object="{id}" cx="{:.2}" cy="{:.2}" r="5" fill="green"/>"#,
                c.x(first.x),
                c.y(first.y)
            );
        }
    }
    for t in targets {
        let (cx, cy) = (c.x(t.x), c.y(t.y));
        let _ = writeln!(
            s,
            r#"<polygon class="target" points="{}" fill="red"/>"#,
            star(cx, cy, 7.0)
        );
        let _ = writeln!(
            s,
            r#"<circle class="threshold" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="none" stroke="red"/>"#,
            c.len(threshold)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Distinct targets listed in a metrics document, in object order.
pub fn metric_targets(metrics: &Metrics) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for t in metrics.objects.iter().filter_map(|o| o.target) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}
