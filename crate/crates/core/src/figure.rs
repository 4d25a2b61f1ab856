//! Planar SVG plots: input sets with sampled points on the left, output
//! sets with the images of those points on the right.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::sets::SpecPair;

const PANEL: f64 = 440.0;
const GAP: f64 = 40.0;
const TOP: f64 = 40.0;
const BOUNDARY_POINTS: usize = 96;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
    left: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>, left: f64) -> Frame {
        let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points {
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
        let span = (hi_x - lo_x).max(hi_y - lo_y).max(1e-9) * 1.1;
        let (cx, cy) = (0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));
        Frame {
            x0: cx - 0.5 * span,
            y1: cy + 0.5 * span,
            scale: PANEL / span,
            left,
        }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (self.left + (x - self.x0) * self.scale, TOP + (self.y1 - y) * self.scale)
    }
}

fn polygon(out: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str) {
    out.push_str("<polygon points=\"");
    for (k, &p) in pts.iter().enumerate() {
        let (x, y) = frame.map(p);
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    let _ = writeln!(out, "\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>");
}

fn dots(out: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str) {
    let _ = writeln!(out, "<g fill=\"{color}\" fill-opacity=\"0.5\">");
    for &p in pts {
        let (x, y) = frame.map(p);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.2\"/>");
    }
    out.push_str("</g>\n");
}

/// Render `samples` points per pair and their images under `net`.
/// Deterministic for a fixed `seed`.
pub fn emit_figure(pairs: &[SpecPair], net: &Network, samples: usize, seed: u64) -> Result<String> {
    if net.input_dim() != 2 || net.output_dim() != 2 {
        return Err(Error::Unsupported(format!(
            "figures need a planar network, got R^{} -> R^{}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    if pairs.iter().any(|p| p.input.dim() != 2 || p.output.dim() != 2) {
        return Err(Error::Dimension("figures need planar specification pairs".into()));
    }

    let mut inputs = Vec::with_capacity(pairs.len());
    let mut outputs = Vec::with_capacity(pairs.len());
    for (j, pair) in pairs.iter().enumerate() {
        let mut sampler = pair.input.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut xs = Vec::with_capacity(samples);
        let mut ys = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x = sampler.draw(&mut rng);
            let y = net.forward(&x)?;
            xs.push((x[0], x[1]));
            ys.push((y[0], y[1]));
        }
        inputs.push((pair.input.boundary_2d(BOUNDARY_POINTS)?, xs));
        outputs.push((pair.output.boundary_2d(BOUNDARY_POINTS)?, ys));
    }

    let width = 2.0 * PANEL + 3.0 * GAP;
    let height = PANEL + TOP + GAP;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (panel, (title, sets)) in [("input", &inputs), ("output", &outputs)].into_iter().enumerate() {
        let left = GAP + panel as f64 * (PANEL + GAP);
        let frame = Frame::fit(sets.iter().flat_map(|(b, p)| b.iter().chain(p.iter()).copied()), left);
        let _ = writeln!(
            out,
            "<rect x=\"{left}\" y=\"{TOP}\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#999\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>",
            left + 0.5 * PANEL,
            TOP - 12.0
        );
        for (j, (boundary, pts)) in sets.iter().enumerate() {
            let color = COLORS[j % COLORS.len()];
            dots(&mut out, &frame, pts, color);
            polygon(&mut out, &frame, boundary, color);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
