//! Standalone SVG rendering.

use std::fmt::Write;

const SIZE: f64 = 640.0;
const RADIUS: f64 = 300.0;
const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

/// Maps ball coordinates onto the canvas.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    scale: f64,
}

impl Frame {
    /// Ball of radius `1/√c`, or a box around `extent` when `c = 0`.
    pub fn new(c: f64, extent: f64) -> Self {
        let half = if c > 0.0 { 1.0 / c.sqrt() } else { extent.max(1e-12) };
        Self { scale: RADIUS / half }
    }

    pub fn x(&self, x: f64) -> f64 {
        SIZE / 2.0 + x * self.scale
    }

    pub fn y(&self, y: f64) -> f64 {
        SIZE / 2.0 - y * self.scale
    }

    pub fn len(&self, l: f64) -> f64 {
        l * self.scale
    }
}

fn open(out: &mut String, extra: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}"{extra}>
<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#
    );
}

fn boundary(out: &mut String, c: f64) {
    if c > 0.0 {
        let _ = writeln!(
            out,
            r#"<circle cx="{0}" cy="{0}" r="{RADIUS}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            SIZE / 2.0
        );
    }
}

/// A straight chord between two ball points.
pub type Edge = ((f64, f64), (f64, f64));

pub struct PlotPoint {
    pub x: f64,
    pub y: f64,
    pub depth: Option<usize>,
}

/// Scatter of latent means with straight parent-child chords.
pub fn embedding_plot(points: &[PlotPoint], edges: &[Edge], c: f64) -> String {
    let extent = points.iter().map(|p| p.x.abs().max(p.y.abs())).fold(0.0, f64::max) * 1.05;
    let f = Frame::new(c, extent);
    let mut out = String::new();
    open(&mut out, "");
    boundary(&mut out, c);
    out.push_str("<g stroke=\"#999999\" stroke-width=\"0.6\">\n");
    for ((x0, y0), (x1, y1)) in edges {
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#, f.x(*x0), f.y(*y0), f.x(*x1), f.y(*y1));
    }
    out.push_str("</g>\n<g fill-opacity=\"0.8\">\n");
    for p in points {
        let color = p.depth.map_or("#000000", |d| PALETTE[d % PALETTE.len()]);
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, f.x(p.x), f.y(p.y));
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Grid of square cells shaded by density; `cells` holds `(x, y, density)` at
/// cell centres.
pub fn heatmap(cells: &[(f64, f64, f64)], cell: f64, c: f64, extent: f64, mass: f64) -> String {
    let f = Frame::new(c, extent);
    let top = cells.iter().map(|t| t.2).fold(0.0, f64::max);
    let mut out = String::new();
    open(&mut out, &format!(r#" data-mass="{mass}""#));
    let w = f.len(cell);
    for &(x, y, p) in cells {
        let a = if top > 0.0 { p / top } else { 0.0 };
        if a < 1e-3 {
            continue;
        }
        let _ = writeln!(
            out,
            r##"<rect x="{:.3}" y="{:.3}" width="{w:.3}" height="{w:.3}" fill="#08306b" fill-opacity="{a:.3}"/>"##,
            f.x(x - cell / 2.0),
            f.y(y + cell / 2.0)
        );
    }
    boundary(&mut out, c);
    out.push_str("</svg>\n");
    out
}
