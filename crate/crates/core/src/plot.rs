//! Static SVG scatter plots of 2-D embeddings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{invalid_argument, Result};
use crate::matrix::DataMatrix;

/// The 20-color categorical palette (matplotlib's tab20 order).
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896",
    "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7",
    "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub size: f64,
    pub radius: f64,
    pub margin_fraction: f64,
    /// Larger inputs are thinned to this many points by a uniform stride.
    pub max_points: usize,
    pub unlabeled_color: &'static str,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            size: 1000.0,
            radius: 1.5,
            margin_fraction: 0.02,
            max_points: 200_000,
            unlabeled_color: PALETTE[0],
        }
    }
}

/// Builds the SVG document. The bounding box is scaled uniformly into the
/// square viewport minus the margin and centered; the y axis points up.
pub fn render_svg(embedding: &DataMatrix, labels: Option<&[i64]>, style: &PlotStyle) -> Result<String> {
    if embedding.cols() != 2 {
        return Err(invalid_argument(format!(
            "scatter plots need a 2-D embedding, got {} columns",
            embedding.cols()
        )));
    }
    let n = embedding.rows();
    if let Some(l) = labels {
        if l.len() != n {
            return Err(invalid_argument(format!("{} labels for {n} points", l.len())));
        }
    }
    let colors: Option<BTreeMap<i64, &str>> = labels.map(|l| {
        let mut m: BTreeMap<i64, &str> = l.iter().map(|&c| (c, "")).collect();
        for (i, v) in m.values_mut().enumerate() {
            *v = PALETTE[i % PALETTE.len()];
        }
        m
    });

    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in embedding.iter_rows() {
        for a in 0..2 {
            lo[a] = lo[a].min(r[a]);
            hi[a] = hi[a].max(r[a]);
        }
    }
    let margin = style.margin_fraction * style.size;
    let avail = style.size - 2.0 * margin;
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if extent > 0.0 { avail / extent } else { 0.0 };
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let c = style.size / 2.0;

    let step = if n > style.max_points { n as f64 / style.max_points as f64 } else { 1.0 };
    let shown = n.min(style.max_points);

    let mut s = String::with_capacity(64 * shown + 256);
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        style.size
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for t in 0..shown {
        let i = (t as f64 * step) as usize;
        let r = embedding.row(i);
        let x = c + scale * (r[0] - mid[0]);
        let y = c - scale * (r[1] - mid[1]);
        let fill = match (&colors, labels) {
            (Some(m), Some(l)) => m[&l[i]],
            _ => style.unlabeled_color,
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{}" fill="{fill}"/>"#,
            style.radius
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_scatter(
    embedding: &DataMatrix,
    labels: Option<&[i64]>,
    out_path: &Path,
    style: &PlotStyle,
) -> Result<()> {
    fs::write(out_path, render_svg(embedding, labels, style)?)?;
    Ok(())
}
