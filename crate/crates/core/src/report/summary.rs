//! Per-(condition, selector) summaries of the risk ratio and violin plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::records::fmt_real;
use crate::simulate::{median_sorted, ReplicationRecord};
use crate::types::Selector;

/// Distribution of the risk ratio for one selector under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub condition_id: String,
    pub selector: Selector,
    /// Successful replications.
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

pub const SUMMARY_HEADER: &str = "condition_id,selector,count,failures,mean,median,q25,q75,min,max";

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Risk ratios grouped by condition and selector, failures counted apart.
pub fn group_ratios(records: &[ReplicationRecord]) -> BTreeMap<(String, Selector), (Vec<f64>, usize)> {
    let mut groups: BTreeMap<(String, Selector), (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let entry = groups.entry((r.condition.id(), r.selector)).or_default();
        if r.error.is_none() && r.risk_ratio.is_finite() {
            entry.0.push(r.risk_ratio);
        } else {
            entry.1 += 1;
        }
    }
    groups
}

/// Summary rows sorted by condition id, then selector in the order
/// CV, AIC, BIC, GCV, SSR.
pub fn summarize(records: &[ReplicationRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::invalid("cannot summarize an empty record set"));
    }
    Ok(group_ratios(records)
        .into_iter()
        .map(|((condition_id, selector), (values, failures))| {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let stat = |f: &dyn Fn(&[f64]) -> f64| if sorted.is_empty() { f64::NAN } else { f(&sorted) };
            SummaryRow {
                condition_id,
                selector,
                count: values.len(),
                failures,
                mean: stat(&|v| v.iter().sum::<f64>() / v.len() as f64),
                median: stat(&median_sorted),
                q25: stat(&|v| quantile_sorted(v, 0.25)),
                q75: stat(&|v| quantile_sorted(v, 0.75)),
                min: stat(&|v| v[0]),
                max: stat(&|v| v[v.len() - 1]),
            }
        })
        .collect())
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.condition_id,
            r.selector,
            r.count,
            r.failures,
            fmt_real(r.mean),
            fmt_real(r.median),
            fmt_real(r.q25),
            fmt_real(r.q75),
            fmt_real(r.min),
            fmt_real(r.max)
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`; zero for a
/// degenerate sample.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Gaussian kernel density estimate at `at`.
pub fn kde(sample: &[f64], h: f64, at: f64) -> f64 {
    let norm = 1.0 / (sample.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    sample.iter().map(|x| (-0.5 * ((at - x) / h).powi(2)).exp()).sum::<f64>() * norm
}

const WIDTH_PER: f64 = 110.0;
const HALF_WIDTH: f64 = 45.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 40.0;
const PLOT_H: f64 = 300.0;
const KDE_POINTS: usize = 80;

/// Violin plot of risk ratios per selector with a red line through the
/// means. The output depends only on the input values.
pub fn violin_svg(title: &str, groups: &[(Selector, Vec<f64>)]) -> Result<String> {
    let groups: Vec<(Selector, Vec<f64>)> = groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(s, v)| {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            (*s, v)
        })
        .collect();
    if groups.is_empty() {
        return Err(Error::invalid("no values to plot"));
    }
    let bands: Vec<f64> = groups.iter().map(|(_, v)| silverman_bandwidth(v)).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for ((_, v), h) in groups.iter().zip(&bands) {
        lo = lo.min(v[0] - 3.0 * h);
        hi = hi.max(v[v.len() - 1] + 3.0 * h);
    }
    if hi - lo < 1e-12 {
        let pad = 0.05 * hi.abs().max(1.0);
        lo -= pad;
        hi += pad;
    }
    let y_of = |v: f64| TOP + PLOT_H * (hi - v) / (hi - lo);
    let width = LEFT + WIDTH_PER * groups.len() as f64 + 20.0;
    let height = TOP + PLOT_H + 50.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="20" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + PLOT_H
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" transform="rotate(-90 15 {:.2})" text-anchor="middle">risk ratio</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );

    let mut means = Vec::new();
    for (i, ((sel, v), &h)) in groups.iter().zip(&bands).enumerate() {
        let cx = LEFT + WIDTH_PER * (i as f64 + 0.5);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        means.push((cx, y_of(mean)));
        if h > 0.0 {
            let (a, b) = (v[0] - 3.0 * h, v[v.len() - 1] + 3.0 * h);
            let pts: Vec<(f64, f64)> = (0..KDE_POINTS)
                .map(|k| {
                    let at = a + (b - a) * k as f64 / (KDE_POINTS - 1) as f64;
                    (at, kde(v, h, at))
                })
                .collect();
            let peak = pts.iter().map(|p| p.1).fold(0.0, f64::max);
            let mut d = String::new();
            for (k, (at, dens)) in pts.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, cx + HALF_WIDTH * dens / peak, y_of(*at));
            }
            for (at, dens) in pts.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", cx - HALF_WIDTH * dens / peak, y_of(*at));
            }
            d.push('Z');
            let _ = writeln!(
                s,
                r##"<path class="violin" d="{d}" fill="#9ecae1" stroke="#3182bd"/>"##
            );
        } else {
            let y = y_of(v[0]);
            let _ = writeln!(
                s,
                r##"<line class="violin" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#3182bd" stroke-width="2"/>"##,
                y - 6.0,
                y + 6.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + PLOT_H + 20.0,
            sel.name().to_uppercase()
        );
    }
    let points: Vec<String> = means.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        s,
        r#"<polyline id="mean-line" points="{}" fill="none" stroke="red" stroke-width="2"/>"#,
        points.join(" ")
    );
    for (x, y) in &means {
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="red"/>"#);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `figures/<condition_id>.svg` for every condition.
pub fn write_figures(records: &[ReplicationRecord], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut by_condition: BTreeMap<String, Vec<(Selector, Vec<f64>)>> = BTreeMap::new();
    for ((cond, sel), (values, _)) in group_ratios(records) {
        by_condition.entry(cond).or_default().push((sel, values));
    }
    let mut written = Vec::new();
    for (cond, groups) in by_condition {
        if groups.iter().all(|(_, v)| v.is_empty()) {
            continue;
        }
        let path = dir.join(format!("{cond}.svg"));
        std::fs::write(&path, violin_svg(&cond, &groups)?).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Mean-line vertices `(x, y)` of an SVG produced by [`violin_svg`].
pub fn mean_line_points(svg: &str) -> Vec<(f64, f64)> {
    let Some(line) = svg.lines().find(|l| l.contains(r#"id="mean-line""#)) else {
        return Vec::new();
    };
    let start = line.find("points=\"").map(|i| i + 8).unwrap_or(0);
    let rest = &line[start..];
    let end = rest.find('"').unwrap_or(rest.len());
    rest[..end]
        .split_whitespace()
        .filter_map(|pair| {
            let (x, y) = pair.split_once(',')?;
            Some((x.parse().ok()?, y.parse().ok()?))
        })
        .collect()
}
