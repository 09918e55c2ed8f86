//! Trace export: CSV with round-trip-exact numbers and a self-contained SVG
//! line plot. Files are written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scenario::RunSummary;
use crate::sim::{Trace, TraceRecord};
use crate::vehicle::Inputs;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("malformed CSV at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ExportError {
    ExportError::Io { path: path.display().to_string(), source }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// C-style `%.17g`: 17 significant digits, trailing zeros dropped.
pub fn fmt_g17(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_string(trace: &Trace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace.column_names()).expect("in-memory write");
    for r in &trace.records {
        let vals = trace.row_values(r);
        let (flag, nums) = vals.split_last().expect("clipped column present");
        let mut row: Vec<String> = nums.iter().map(|v| fmt_g17(*v)).collect();
        row.push(if *flag != 0.0 { "1".into() } else { "0".into() });
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

pub fn emit_csv(trace: &Trace, path: &Path) -> Result<(), ExportError> {
    write_atomic(path, csv_string(trace).as_bytes())
}

/// Inverse of [`csv_string`].
pub fn parse_csv(text: &str) -> Result<Trace, ExportError> {
    let malformed = |line: usize, message: String| ExportError::Malformed { line, message };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.iter().map(String::from).collect();
    let fixed = 9;
    if header.len() < fixed + 1 || !(header.len() - fixed - 1).is_multiple_of(3) {
        return Err(malformed(1, format!("{} columns", header.len())));
    }
    let channels = (header.len() - fixed - 1) / 3;
    if header != (Trace { channels, records: Vec::new() }).column_names() {
        return Err(malformed(1, "unexpected header".into()));
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| malformed(line, e.to_string()))?;
        let vals: Vec<f64> =
            row.iter().map(str::parse::<f64>).collect::<Result<_, _>>().map_err(|e| malformed(line, e.to_string()))?;
        let ys = |k: usize| (0..channels).map(|c| vals[fixed + 3 * c + k]).collect::<Vec<f64>>();
        records.push(TraceRecord {
            t: vals[0],
            x_true: [vals[1], vals[2]],
            x_nominal: [vals[3], vals[4]],
            u_nominal: Inputs::new(vals[5], vals[7]),
            u_injected: Inputs::new(vals[6], vals[8]),
            y_true: ys(0),
            y_received: ys(1),
            y_nominal: ys(2),
            clipped: vals[header.len() - 1] != 0.0,
        });
    }
    Ok(Trace { channels, records })
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// SVG line plot of the named trace columns against time.
pub fn plot_svg(trace: &Trace, channels: &[&str]) -> Result<String, ExportError> {
    let times = trace.times();
    let series: Vec<(String, Vec<f64>)> = channels
        .iter()
        .map(|c| trace.column(c).map(|v| (c.to_string(), v)).ok_or_else(|| ExportError::UnknownChannel(c.to_string())))
        .collect::<Result<_, _>>()?;

    let (t_lo, t_hi) = match (times.first(), times.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        (Some(a), _) => (*a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let finite = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (mut y_lo, mut y_hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !(y_lo.is_finite() && y_hi.is_finite()) {
        (y_lo, y_hi) = (-1.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 * y_hi.abs().max(1.0) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + (t - t_lo) / (t_hi - t_lo) * pw;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let t = t_lo + f * (t_hi - t_lo);
        let y = y_lo + f * (y_hi - y_lo);
        let (x, yy) = (px(t), py(y));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick(t));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{yy:.2}" x2="{LEFT}" y2="{yy:.2}" stroke="black"/>"#, LEFT - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, yy + 4.0, tick(y));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#, LEFT + pw / 2.0, HEIGHT - 24.0);

    let stride = times.len().div_ceil(MAX_POINTS).max(1);
    for (i, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::new();
        let mut idx: Vec<usize> = (0..values.len()).step_by(stride).collect();
        if let Some(&last) = idx.last() {
            if last + 1 != values.len() {
                idx.push(values.len() - 1);
            }
        }
        for k in idx {
            if values[k].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", px(times[k]), py(values[k]));
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let lx = LEFT + 10.0 + 130.0 * i as f64;
        let ly = HEIGHT - 8.0;
        let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{name}</text>"#, lx + 22.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn emit_plot(trace: &Trace, channels: &[&str], path: &Path) -> Result<(), ExportError> {
    let svg = plot_svg(trace, channels)?;
    write_atomic(path, svg.as_bytes())
}

/// Write `<name>.csv`, `<name>.svg` (all output channels) and `<name>.json`
/// into `dir`, returning the paths written.
pub fn write_run_outputs(name: &str, trace: &Trace, summary: &RunSummary, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv = dir.join(format!("{name}.csv"));
    emit_csv(trace, &csv)?;
    let names: Vec<String> = (0..trace.channels)
        .flat_map(|i| [format!("y_true_{i}"), format!("y_recv_{i}"), format!("y_nom_{i}")])
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let svg = dir.join(format!("{name}.svg"));
    emit_plot(trace, &refs, &svg)?;
    let json = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    write_atomic(&json, text.as_bytes())?;
    Ok(vec![csv, svg, json])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::TimeGrid;
    use crate::sim::{simulate, IdentityTaps, Waveform};
    use crate::vehicle::{build_state_space, output_map, OutputConfig, SaturationLimits, StiffnessConvention, VehicleParams};

    fn run(cfg: OutputConfig, n: usize, steer: Waveform) -> Trace {
        let m = build_state_space(&VehicleParams::table1(StiffnessConvention::PerAxle)).unwrap();
        let grid = TimeGrid::new(0.0, 0.01, n).unwrap();
        simulate(&m, &output_map(&m, cfg), &steer, &mut IdentityTaps, &SaturationLimits::NONE, &grid).unwrap()
    }

    #[test]
    fn g17_formatting() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(-0.0), "0");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(123456.5), "123456.5");
        assert_eq!(fmt_g17(1e20), "1e+20");
        for v in [std::f64::consts::PI, -2.5e-300, 7.0e15, 1.0 / 3.0] {
            assert_eq!(fmt_g17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn zero_run_csv() {
        let tr = run(OutputConfig::YawRate, 3, Waveform::Zero);
        let text = csv_string(&tr);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "t,vy_true,r_true,vy_nom,r_nom,mz_nom,mz_inj,delta_nom,delta_inj,y_true_0,y_recv_0,y_nom_0,clipped");
        for l in &lines[2..] {
            assert!(l.split(',').skip(1).all(|f| f == "0"), "{l}");
        }
    }

    #[test]
    fn combined_has_six_output_columns() {
        let tr = run(OutputConfig::Combined, 2, Waveform::Zero);
        let names = tr.column_names();
        assert_eq!(names.iter().filter(|n| n.starts_with("y_")).count(), 6);
    }

    #[test]
    fn csv_round_trip() {
        let tr = run(OutputConfig::Combined, 200, Waveform::Sinusoid { amplitude: 0.05, frequency: 0.7, phase: 0.3 });
        assert_eq!(parse_csv(&csv_string(&tr)).unwrap(), tr);
    }

    #[test]
    fn plot_checks_channels_and_is_deterministic() {
        let tr = run(OutputConfig::YawRate, 100, Waveform::Sinusoid { amplitude: 0.05, frequency: 0.7, phase: 0.0 });
        assert!(matches!(plot_svg(&tr, &["nope"]), Err(ExportError::UnknownChannel(_))));
        let empty = plot_svg(&tr, &[]).unwrap();
        assert!(!empty.contains("polyline"));
        let a = plot_svg(&tr, &["y_true_0", "y_recv_0"]).unwrap();
        assert_eq!(a, plot_svg(&tr, &["y_true_0", "y_recv_0"]).unwrap());
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = std::env::temp_dir().join(format!("stealthlab-export-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.csv");
        let tr = run(OutputConfig::YawRate, 3, Waveform::Zero);
        emit_csv(&tr, &p).unwrap();
        emit_csv(&tr, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), csv_string(&tr));
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
        assert!(matches!(emit_csv(&tr, &dir.join("missing/x.csv")), Err(ExportError::Io { .. })));
    }
}
