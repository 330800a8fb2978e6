use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::table::{aggregate, Aggregate, Table};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 130.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Runs plotted as one line (with a band when there are several).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGroup {
    pub label: String,
    pub tables: Vec<Table>,
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG line chart of one metric against deployment index, with a shaded
/// +-1 std band for series aggregated over more than one run.
pub fn render_svg(metric: &str, series: &[(String, Aggregate)]) -> String {
    let mut xs: Vec<f64> = series.iter().flat_map(|(_, a)| a.x.iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, a) in series {
        for (m, s) in a.mean.iter().zip(&a.std) {
            if m.is_finite() {
                let band = if a.runs > 1 && s.is_finite() { *s } else { 0.0 };
                lo = lo.min(m - band);
                hi = hi.max(m + band);
            }
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let (x0, x1) = (
        xs.first().copied().unwrap_or(1.0),
        xs.last().copied().unwrap_or(1.0),
    );
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| {
        if x1 > x0 {
            MARGIN_L + (x - x0) / (x1 - x0) * plot_w
        } else {
            MARGIN_L + plot_w / 2.0
        }
    };
    let py = |y: f64| MARGIN_T + (hi - y) / (hi - lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        escape(metric)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#,
        l = MARGIN_L,
        t = MARGIN_T,
        b = MARGIN_T + plot_h,
        r = MARGIN_L + plot_w
    );
    for &x in &xs {
        let _ = writeln!(
            svg,
            r#"<g class="xtick"><line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{b2}" stroke="black"/><text x="{p:.2}" y="{t}" text-anchor="middle">{}</text></g>"#,
            fmt_num(x),
            p = px(x),
            b = MARGIN_T + plot_h,
            b2 = MARGIN_T + plot_h + 5.0,
            t = MARGIN_T + plot_h + 18.0
        );
    }
    for k in 0..=4 {
        let y = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<g class="ytick"><line x1="{a}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{}</text></g>"#,
            fmt_num(y),
            a = MARGIN_L - 5.0,
            l = MARGIN_L,
            p = py(y),
            tx = MARGIN_L - 8.0,
            ty = py(y) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">deployment</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 10.0
    );
    for (i, (label, a)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64, f64)> = a
            .x
            .iter()
            .zip(a.mean.iter().zip(&a.std))
            .filter(|(_, (m, _))| m.is_finite())
            .map(|(x, (m, s))| (*x, *m, *s))
            .collect();
        if a.runs > 1 && !pts.is_empty() {
            let mut d = String::new();
            for (k, (x, m, s)) in pts.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, px(*x), py(m + s));
            }
            for (x, m, s) in pts.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", px(*x), py(m - s));
            }
            let _ = writeln!(
                svg,
                r#"<path class="band" d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                d
            );
        }
        let line: Vec<String> = pts.iter().map(|(x, m, _)| format!("{:.2},{:.2}", px(*x), py(*m))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for (x, m, _) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(*x), py(*m));
        }
        let ly = MARGIN_T + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes one `<metric>.svg` per metric column into `out_dir`. Returns the
/// files written; no files are written when every group is empty.
pub fn emit_curves(groups: &[CurveGroup], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let nonempty: Vec<&CurveGroup> = groups
        .iter()
        .filter(|g| g.tables.iter().any(|t| !t.is_empty()))
        .collect();
    if nonempty.is_empty() {
        log::warn!("no metrics rows to plot");
        return Ok(Vec::new());
    }
    let mut metrics: Vec<String> = Vec::new();
    for g in &nonempty {
        for t in &g.tables {
            if !t.columns.iter().any(|c| c == "deployment") {
                return Err(Error::Parse("metrics table has no 'deployment' column".into()));
            }
            for c in &t.columns {
                if c != "deployment" && !metrics.contains(c) {
                    metrics.push(c.clone());
                }
            }
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for metric in &metrics {
        let series: Vec<(String, Aggregate)> = nonempty
            .iter()
            .filter_map(|g| aggregate(&g.tables, metric).map(|a| (g.label.clone(), a)))
            .collect();
        let path = out_dir.join(format!("{metric}.svg"));
        std::fs::write(&path, render_svg(metric, &series)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(f64, f64)]) -> Table {
        Table {
            columns: vec!["deployment".into(), "eval_return_mean".into()],
            rows: rows.iter().map(|(d, v)| vec![*d, *v]).collect(),
        }
    }

    #[test]
    fn single_run_has_one_tick_per_deployment_and_no_band() {
        let t = table(&[(1.0, 0.0), (2.0, 1.0), (3.0, 4.0), (4.0, 2.0), (5.0, 8.0)]);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_curves(&[CurveGroup { label: "full".into(), tables: vec![t] }], dir.path()).unwrap();
        assert_eq!(files.len(), 1);
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(svg.matches(r#"class="xtick""#).count(), 5);
        assert!(!svg.contains(r#"class="band""#));
    }

    #[test]
    fn aggregated_runs_draw_a_band() {
        let a = table(&[(1.0, 0.0), (2.0, 1.0)]);
        let b = table(&[(1.0, 2.0), (2.0, 5.0)]);
        let dir = tempfile::tempdir().unwrap();
        let files = emit_curves(&[CurveGroup { label: "full".into(), tables: vec![a, b] }], dir.path()).unwrap();
        let svg = std::fs::read_to_string(&files[0]).unwrap();
        assert!(svg.contains(r#"class="band""#));
    }

    #[test]
    fn empty_metrics_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let empty = Table { columns: vec!["deployment".into(), "x".into()], rows: vec![] };
        let files = emit_curves(&[CurveGroup { label: "a".into(), tables: vec![empty] }], dir.path()).unwrap();
        assert!(files.is_empty());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}
