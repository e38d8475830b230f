//! Static SVG figures and an HTML index.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablate::{DropMatrix, SweepCurve};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OverlapFigure {
    pub name: String,
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HistogramFigure {
    pub name: String,
    pub counts: Vec<usize>,
}

/// Everything a report can show; every list may be empty.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportInput {
    pub drop_matrices: Vec<(String, DropMatrix)>,
    pub sweeps: Vec<SweepCurve>,
    pub histograms: Vec<HistogramFigure>,
    pub overlaps: Vec<OverlapFigure>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn rgb(r: f64, g: f64, b: f64) -> String {
    let c = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(r), c(g), c(b))
}

/// Diverging scale on [-1, 1]: white at 0, red for positive, blue for negative.
pub fn diverging_color(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    if t >= 0.0 {
        rgb(1.0, 1.0 - 0.8 * t, 1.0 - 0.8 * t)
    } else {
        rgb(1.0 + 0.8 * t, 1.0 + 0.8 * t, 1.0)
    }
}

/// Sequential scale on [0, 1]: white to dark green.
pub fn sequential_color(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    rgb(1.0 - 0.9 * t, 1.0 - 0.5 * t, 1.0 - 0.9 * t)
}

const MISSING: &str = "#bdbdbd";
const CELL: f64 = 44.0;

fn grid_svg(
    title: &str,
    rows: &[String],
    cols: &[String],
    cell: impl Fn(usize, usize) -> (String, String),
) -> String {
    let label_w = 8.0 * rows.iter().map(|r| r.len()).max().unwrap_or(0) as f64 + 12.0;
    let label_h = 7.0 * cols.iter().map(|c| c.len()).max().unwrap_or(0) as f64 + 12.0;
    let top = 30.0 + label_h;
    let w = label_w + CELL * cols.len() as f64 + 10.0;
    let h = top + CELL * rows.len() as f64 + 10.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-size="13">{}</text>"#,
        escape(title)
    );
    for (j, c) in cols.iter().enumerate() {
        let x = label_w + CELL * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" transform="rotate(-60 {x:.1} {:.1})">{}</text>"#,
            top - 4.0,
            top - 4.0,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + CELL * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            label_w - 4.0,
            y + CELL / 2.0 + 4.0,
            escape(r)
        );
        for j in 0..cols.len() {
            let x = label_w + CELL * j as f64;
            let (fill, text) = cell(i, j);
            let _ = writeln!(
                s,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#ffffff"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0,
                escape(&text)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Signed heatmap of accuracy drops; undefined cells are grey and marked `n/a`.
pub fn drop_matrix_svg(title: &str, m: &DropMatrix) -> String {
    grid_svg(title, &m.relations, &m.relations, |i, j| {
        match m.cells[i][j] {
            Some(v) => (diverging_color(v), format!("{v:.2}")),
            None => (MISSING.to_string(), "n/a".to_string()),
        }
    })
}

pub fn overlap_svg(fig: &OverlapFigure) -> String {
    let max = fig
        .counts
        .iter()
        .flatten()
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    grid_svg(&fig.name, &fig.labels, &fig.labels, |i, j| {
        let v = fig.counts[i][j];
        (sequential_color(v as f64 / max), v.to_string())
    })
}

const PLOT_W: f64 = 420.0;
const PLOT_H: f64 = 240.0;
const LEFT: f64 = 50.0;
const TOP: f64 = 30.0;

/// Two series over log-scaled k: the target relation (solid) and the mean of
/// the others (dashed). The `k = 0` baseline is drawn as horizontal guides.
pub fn sweep_svg(curve: &SweepCurve) -> String {
    let pts: Vec<_> = curve.points.iter().filter(|p| p.k > 0).collect();
    let kmax = pts.iter().map(|p| p.k).max().unwrap_or(1).max(2) as f64;
    let kmin = pts.iter().map(|p| p.k).min().unwrap_or(1) as f64;
    let span = (kmax.log10() - kmin.log10()).max(1e-9);
    let x = |k: f64| LEFT + PLOT_W * (k.log10() - kmin.log10()) / span;
    let y = |a: f64| TOP + PLOT_H * (1.0 - a.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="11">"#,
        LEFT + PLOT_W + 140.0,
        TOP + PLOT_H + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-size="13">{}</text>"#,
        escape(&curve.relation)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#444444"/>"##
    );
    for a in [0.0, 0.5, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{a:.1}</text>"#,
            LEFT - 4.0,
            y(a) + 4.0
        );
    }
    for p in &pts {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x(p.k as f64),
            TOP + PLOT_H + 14.0,
            p.k
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">neurons masked (log scale)</text>"#,
        LEFT + PLOT_W / 2.0,
        TOP + PLOT_H + 32.0
    );
    if let Some(base) = curve.points.iter().find(|p| p.k == 0) {
        for (a, color) in [
            (base.acc_self, "#d62728"),
            (base.acc_others_mean, "#1f77b4"),
        ] {
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}" stroke-opacity="0.35"/>"#,
                LEFT + PLOT_W,
                y(a),
                y(a)
            );
        }
    }
    let series = [
        (
            "self",
            "#d62728",
            "",
            pts.iter().map(|p| (p.k, p.acc_self)).collect::<Vec<_>>(),
        ),
        (
            "others",
            "#1f77b4",
            r#" stroke-dasharray="5,3""#,
            pts.iter().map(|p| (p.k, p.acc_others_mean)).collect(),
        ),
    ];
    for (i, (name, color, dash, data)) in series.iter().enumerate() {
        let path: Vec<String> = data
            .iter()
            .map(|&(k, a)| format!("{:.1},{:.1}", x(k as f64), y(a)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            path.join(" ")
        );
        for &(k, a) in data {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                x(k as f64),
                y(a)
            );
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            LEFT + PLOT_W + 10.0,
            LEFT + PLOT_W + 34.0,
            LEFT + PLOT_W + 40.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn histogram_svg(fig: &HistogramFigure) -> String {
    let max = fig.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar = PLOT_W / fig.counts.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" font-family="sans-serif" font-size="11">"#,
        LEFT + PLOT_W + 20.0,
        TOP + PLOT_H + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-size="13">{}</text>"#,
        escape(&fig.name)
    );
    for (i, &c) in fig.counts.iter().enumerate() {
        let h = PLOT_H * c as f64 / max;
        let x = LEFT + bar * i as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="#6a51a3"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{c}</text><text x="{:.1}" y="{:.1}" text-anchor="middle">L{i}</text>"##,
            x + 2.0,
            TOP + PLOT_H - h,
            (bar - 4.0).max(1.0),
            x + bar / 2.0,
            TOP + PLOT_H - h - 3.0,
            x + bar / 2.0,
            TOP + PLOT_H + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one SVG per figure and `index.html` into `dir`; returns the paths written.
pub fn render_report(input: &ReportInput, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(String, String, String)> = Vec::new();
    for (name, m) in &input.drop_matrices {
        files.push((
            format!("drop_{}.svg", slug(name)),
            name.clone(),
            drop_matrix_svg(name, m),
        ));
    }
    for c in &input.sweeps {
        files.push((
            format!("sweep_{}.svg", slug(&c.relation)),
            format!("sweep: {}", c.relation),
            sweep_svg(c),
        ));
    }
    for h in &input.histograms {
        files.push((
            format!("layers_{}.svg", slug(&h.name)),
            h.name.clone(),
            histogram_svg(h),
        ));
    }
    for o in &input.overlaps {
        files.push((
            format!("overlap_{}.svg", slug(&o.name)),
            o.name.clone(),
            overlap_svg(o),
        ));
    }
    let mut written = Vec::new();
    let mut index = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>report</title></head><body>\n<h1>Report</h1>\n",
    );
    index.push_str(
        "<h2>Color scales</h2>\n<ul>\n\
         <li>Drop matrices: diverging scale clipped to [-1, 1]. White is 0; red cells are accuracy drops \
         (masking hurt the row relation); blue cells are negative drops (masking improved it). \
         Grey cells marked n/a have a zero baseline, so the drop is undefined.</li>\n\
         <li>Overlap matrices: white to dark green, scaled by the largest count in the matrix.</li>\n\
         <li>Sweeps: x is the number of masked neurons on a log scale; red solid is the target relation, \
         blue dashed the mean of the other relations; faint horizontal lines are the unmasked baselines.</li>\n\
         </ul>\n",
    );
    let _ = writeln!(index, "<h2>Figures ({})</h2>\n<ul>", files.len());
    for (file, title, svg) in &files {
        let path = dir.join(file);
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        let _ = writeln!(
            index,
            "<li><a href=\"{file}\">{}</a><br><img src=\"{file}\"></li>",
            escape(title)
        );
        written.push(path);
    }
    index.push_str("</ul>\n</body></html>\n");
    let path = dir.join("index.html");
    std::fs::write(&path, index).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
