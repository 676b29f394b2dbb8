//! Minimal SVG plots: line charts with vertical markers and field heatmaps.

use std::fmt::Write;

use crate::record::RunRecord;

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 36.0;
const MB: f64 = 50.0;

pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn finite_range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        Some(if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) })
    } else {
        None
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.2e}")
    }
}

/// Line chart; `log_y` plots `log10 y` (non-positive values dropped).
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], markers: &[f64], log_y: bool) -> String {
    let ty = |y: f64| if log_y { if y > 0.0 { y.log10() } else { f64::NAN } } else { y };
    let xr = finite_range(series.iter().flat_map(|s| s.x.iter().copied()).chain(markers.iter().copied()))
        .unwrap_or((0.0, 1.0));
    let yr = finite_range(series.iter().flat_map(|s| s.y.iter().map(|&y| ty(y)))).unwrap_or((0.0, 1.0));
    let px = |x: f64| ML + (x - xr.0) / (xr.1 - xr.0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - yr.0) / (yr.1 - yr.0) * (H - MT - MB);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xr.0 + f * (xr.1 - xr.0);
        let yv = yr.0 + f * (yr.1 - yr.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, px(xv), H - MB + 16.0, tick(xv));
        let label = if log_y { format!("1e{yv:.1}") } else { tick(yv) };
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, ML - 4.0, py(yv) + 4.0, label);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    for &m in markers {
        if m.is_finite() {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" y1="{MT}" x2="{0:.2}" y2="{1}" stroke="red" stroke-dasharray="4 3"/>"#,
                px(m),
                H - MB
            );
        }
    }
    let colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd"];
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .x
            .iter()
            .zip(&ser.y)
            .filter_map(|(&x, &y)| {
                let y = ty(y);
                (x.is_finite() && y.is_finite()).then(|| format!("{:.2},{:.2}", px(x), py(y)))
            })
            .collect();
        let color = colors[i % colors.len()];
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            ML + 8.0,
            MT + 16.0 * (i as f64 + 1.0),
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap of an `n x n` field given row-major (`values[i * n + j]`, `i` along x1).
pub fn heatmap(title: &str, n: usize, values: &[f64]) -> String {
    let side = H - MT - MB;
    let cell = if n > 0 { side / n as f64 } else { side };
    let (lo, hi) = finite_range(values.iter().copied()).unwrap_or((-1.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for i in 0..n {
        for j in 0..n {
            let v = values.get(i * n + j).copied().unwrap_or(f64::NAN);
            let t = if v.is_finite() { (v - lo) / (hi - lo) } else { 0.5 };
            // blue (low) to red (high) through white
            let (r, g, b) = if t < 0.5 {
                let a = t * 2.0;
                (255.0 * a, 255.0 * a, 255.0)
            } else {
                let a = (1.0 - t) * 2.0;
                (255.0, 255.0 * a, 255.0 * a)
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({},{},{})"/>"#,
                ML + i as f64 * cell,
                MT + (n - 1 - j) as f64 * cell,
                cell + 0.05,
                cell + 0.05,
                r.round(),
                g.round(),
                b.round()
            );
        }
    }
    let _ = writeln!(s, r#"<rect x="{ML}" y="{MT}" width="{side}" height="{side}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}">min {}</text>"#, ML + side + 16.0, MT + 16.0, tick(lo));
    let _ = writeln!(s, r#"<text x="{}" y="{}">max {}</text>"#, ML + side + 16.0, MT + 32.0, tick(hi));
    s.push_str("</svg>\n");
    s
}

/// Field tables carry columns `i, j, u` (plus an optional leading `solution`).
fn heatmaps(record: &RunRecord, table: &str, prefix: &str, out: &mut Vec<(String, String)>) {
    let Some(t) = record.table(table) else { return };
    let (Some(ci), Some(cj), Some(cu)) = (t.column("i"), t.column("j"), t.column("u")) else { return };
    let cs = t.column("solution");
    let mut groups: std::collections::BTreeMap<i64, Vec<(usize, usize, f64)>> = Default::default();
    for r in &t.rows {
        let key = cs.and_then(|c| r[c].as_f64()).unwrap_or(0.0) as i64;
        let get = |c: usize| r[c].as_f64().unwrap_or(f64::NAN);
        groups.entry(key).or_default().push((get(ci) as usize, get(cj) as usize, get(cu)));
    }
    for (key, cells) in groups {
        let n = (cells.len() as f64).sqrt().round() as usize;
        let mut vals = vec![f64::NAN; n * n];
        for (i, j, u) in cells {
            if i < n && j < n {
                vals[i * n + j] = u;
            }
        }
        let name = if cs.is_some() { format!("{prefix}_{key}") } else { prefix.to_string() };
        out.push((name.clone(), heatmap(&name, n, &vals)));
    }
}

/// The plots that belong to a record, as `(file stem, svg)`.
pub fn plots_for(record: &RunRecord) -> Vec<(String, String)> {
    let mut out = Vec::new();
    match record.command.as_str() {
        "sweep" => {
            let (eps, sigma, lambda) = match record.table("sweep") {
                Some(t) => (t.numbers("eps"), t.numbers("sigma_min"), t.numbers("lambda")),
                None => Default::default(),
            };
            let markers: Vec<f64> = record
                .summary
                .get("predicted")
                .and_then(|v| v.as_array())
                .map(|a| a.iter().filter_map(|p| p.get("eps").and_then(|e| e.as_f64())).collect())
                .unwrap_or_default();
            out.push((
                "sigma_min".into(),
                line_plot(
                    "smallest singular value vs eps",
                    "eps",
                    "sigma_min",
                    &[Series {
                        label: "sigma_min".into(),
                        x: eps.clone(),
                        y: sigma,
                    }],
                    &markers,
                    true,
                ),
            ));
            out.push((
                "bifurcation".into(),
                line_plot(
                    "lambda vs eps",
                    "eps",
                    "lambda",
                    &[Series {
                        label: "lambda".into(),
                        x: eps,
                        y: lambda,
                    }],
                    &markers,
                    false,
                ),
            ));
        }
        "solve" => heatmaps(record, "field", "solution", &mut out),
        "census" => heatmaps(record, "census_fields", "census", &mut out),
        "oracle1d" => {
            if let Some(t) = record.table("profile") {
                out.push((
                    "profile".into(),
                    line_plot(
                        "1D oracle profile",
                        "x",
                        "u",
                        &[Series {
                            label: "u".into(),
                            x: t.numbers("x"),
                            y: t.numbers("u"),
                        }],
                        &[],
                        false,
                    ),
                ));
            }
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_give_empty_axes() {
        let s = line_plot("t", "x", "y", &[], &[], true);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n") && !s.contains("polyline"));
        let s = line_plot("t", "x", "y", &[Series { label: "a".into(), x: vec![], y: vec![] }], &[0.1], false);
        assert!(s.contains("<line"));
        let h = heatmap("h", 0, &[]);
        assert!(h.ends_with("</svg>\n"));
    }

    #[test]
    fn heatmap_has_one_cell_per_point() {
        let h = heatmap("h", 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(h.matches("fill=\"rgb(").count(), 9);
    }
}
