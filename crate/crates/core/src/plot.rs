//! SVG rendering of experiment CSVs.
//!
//! Output is plain hand-written SVG with fixed number formatting, so the same
//! input always yields byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a staircase (hold value until the next x).
    pub step: bool,
    pub markers: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// A CSV loaded as strings with its header.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>, required: &[&str]) -> Result<Table> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Schema { path: path.to_path_buf(), message: format!("cannot read: {e}") },
            _ => Error::Csv(e),
        })?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        for col in required {
            if !header.iter().any(|h| h == col) {
                return Err(Error::Schema { path: path.to_path_buf(), message: format!("missing column `{col}`") });
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        if rows.is_empty() {
            return Err(Error::Schema { path: path.to_path_buf(), message: "no data rows".into() });
        }
        Ok(Table { path: path.to_path_buf(), header, rows })
    }

    pub fn column(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("column checked on read")
    }

    pub fn num(&self, row: usize, name: &str) -> Result<f64> {
        let s = &self.rows[row][self.column(name)];
        s.parse::<f64>().map_err(|_| Error::Schema {
            path: self.path.clone(),
            message: format!("row {}: `{name}` is not a number (`{s}`)", row + 1),
        })
    }

    pub fn text(&self, row: usize, name: &str) -> &str {
        &self.rows[row][self.column(name)]
    }
}

fn fmt(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64, log: bool) -> String {
    let v = if log { 10f64.powf(v) } else { v };
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-300 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders a line chart.
pub fn render_svg(fig: &Figure) -> Result<String> {
    let tr_y = |y: f64| if fig.log_y { y.log10() } else { y };
    let finite: Vec<(f64, f64)> = fig
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, y)| (x, tr_y(y))))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::Contract(format!("figure `{}` has no finite points", fig.title)));
    }
    let (x_lo, x_hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y_lo, y_hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let (x_lo, x_hi) = nice_range(x_lo, x_hi);
    let (y_lo, y_hi) = nice_range(y_lo, y_hi);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH,
        h = HEIGHT
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        fmt(MARGIN_LEFT + plot_w / 2.0),
        escape(&fig.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(plot_w),
        fmt(plot_h)
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x_lo + t * (x_hi - x_lo);
        let yv = y_lo + t * (y_hi - y_lo);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px}" y1="{top}" x2="{px}" y2="{bot}" stroke="#dddddd"/><text x="{px}" y="{ty}" text-anchor="middle">{lbl}</text>"##,
            px = fmt(px),
            top = fmt(MARGIN_TOP),
            bot = fmt(MARGIN_TOP + plot_h),
            ty = fmt(MARGIN_TOP + plot_h + 16.0),
            lbl = tick_label(xv, false)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{l}" y1="{py}" x2="{r}" y2="{py}" stroke="#dddddd"/><text x="{tx}" y="{ty}" text-anchor="end">{lbl}</text>"##,
            l = fmt(MARGIN_LEFT),
            r = fmt(MARGIN_LEFT + plot_w),
            py = fmt(py),
            tx = fmt(MARGIN_LEFT - 6.0),
            ty = fmt(py + 4.0),
            lbl = tick_label(yv, fig.log_y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 14.0),
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}</text>"#,
        escape(&fig.y_label),
        y = fmt(MARGIN_TOP + plot_h / 2.0)
    );

    for (i, series) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = series
            .points
            .iter()
            .map(|&(x, y)| (x, tr_y(y)))
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let mut path = String::new();
        for (k, &(x, y)) in pts.iter().enumerate() {
            if k == 0 {
                let _ = write!(path, "M{} {}", fmt(sx(x)), fmt(sy(y)));
            } else {
                if series.step {
                    let _ = write!(path, " H{}", fmt(sx(x)));
                }
                let _ = write!(path, " L{} {}", fmt(sx(x)), fmt(sy(y)));
            }
        }
        if !path.is_empty() {
            let _ = writeln!(s, r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        }
        if series.markers {
            for &(x, y) in &pts {
                let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}"/>"#, fmt(sx(x)), fmt(sy(y)));
            }
        }
        let ly = MARGIN_TOP + 12.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            fmt(lx),
            fmt(ly - 4.0),
            fmt(lx + 18.0),
            fmt(ly - 4.0),
            fmt(lx + 22.0),
            fmt(ly),
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn write_svg(fig: &Figure, out: &Path) -> Result<()> {
    let svg = render_svg(fig)?;
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}

/// Gbest fitness against iteration, one staircase per trace file.
pub fn plot_convergence(traces: &[(String, PathBuf)], out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for (label, path) in traces {
        let t = Table::read(path, &["iteration", "gbest_fitness", "gbest_penalty"])?;
        let mut points = Vec::with_capacity(t.rows.len());
        for r in 0..t.rows.len() {
            points.push((t.num(r, "iteration")?, t.num(r, "gbest_fitness")?));
        }
        series.push(Series { label: label.clone(), points, step: true, markers: false });
    }
    if series.is_empty() {
        return Err(Error::Contract("no convergence traces to plot".into()));
    }
    write_svg(
        &Figure {
            title: "Convergence of the global best".into(),
            x_label: "iteration".into(),
            y_label: "gbest fitness".into(),
            log_y: false,
            series,
        },
        out,
    )
}

/// Mean trade-off curves (total UL vs total DL power) per scheme and antenna count.
pub fn plot_tradeoff(mean_csv: &Path, out: &Path) -> Result<()> {
    let t = Table::read(mean_csv, &["scheme", "antennas", "lambda1", "mean_total_ul_w", "mean_total_dl_w"])?;
    let mut groups: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        let label = format!("{} N={}", t.text(r, "scheme"), t.text(r, "antennas"));
        let p = (t.num(r, "lambda1")?, t.num(r, "mean_total_ul_w")?, t.num(r, "mean_total_dl_w")?);
        groups.entry(label).or_default().push(p);
    }
    let series = groups
        .into_iter()
        .map(|(label, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points: pts.into_iter().map(|(_, x, y)| (x, y)).collect(), step: false, markers: true }
        })
        .collect();
    write_svg(
        &Figure {
            title: "UL/DL power trade-off".into(),
            x_label: "total UL power (W)".into(),
            y_label: "total DL power (W)".into(),
            log_y: false,
            series,
        },
        out,
    )
}

/// Mean total powers against SI loss per scheme.
pub fn plot_si_sweep(mean_csv: &Path, out: &Path) -> Result<()> {
    let t = Table::read(mean_csv, &["rho_db", "scheme", "fpa_antennas", "mean_total_ul_w", "mean_total_dl_w"])?;
    let mut series = Vec::new();
    for (col, name) in [("mean_total_ul_w", "UL"), ("mean_total_dl_w", "DL")] {
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in 0..t.rows.len() {
            let label = format!("{} N={} {name}", t.text(r, "scheme"), t.text(r, "fpa_antennas"));
            groups.entry(label).or_default().push((t.num(r, "rho_db")?, t.num(r, col)?));
        }
        for (label, mut points) in groups {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            series.push(Series { label, points, step: false, markers: true });
        }
    }
    write_svg(
        &Figure {
            title: "Total power against SI loss".into(),
            x_label: "SI loss (dB)".into(),
            y_label: "total power (W)".into(),
            log_y: true,
            series,
        },
        out,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_missing_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "rho_db,scheme,fpa_antennas,mean_total_ul_w,mean_total_dl_w\n").unwrap();
        let out = dir.path().join("a.svg");
        assert!(matches!(plot_si_sweep(&p, &out), Err(Error::Schema { .. })));
        assert!(!out.exists());
        std::fs::write(&p, "iteration,gbest_fitness\n0,1\n").unwrap();
        let err = plot_convergence(&[("x".into(), p.clone())], &out).unwrap_err();
        assert!(err.to_string().contains("gbest_penalty"), "{err}");
    }

    #[test]
    fn staircase_path() {
        let fig = Figure {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_y: false,
            series: vec![Series { label: "a".into(), points: vec![(0.0, 2.0), (1.0, 1.0), (2.0, 1.0)], step: true, markers: false }],
        };
        let svg = render_svg(&fig).unwrap();
        assert!(svg.contains(" H"));
        assert_eq!(svg, render_svg(&fig).unwrap());
    }
}
