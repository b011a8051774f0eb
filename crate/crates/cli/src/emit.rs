//! CSV and SVG emission for rate curves.
//!
//! The CSV format is bit-exact: header `method,engine,tau,sigma,rate`, rows
//! sorted by (method, engine, tau), every float printed with 12 significant
//! digits, LF line endings. Samples without a rate (inadmissible step or a
//! recorded engine failure) keep their row with an empty rate field.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::sweep::RateCurve;

/// Fixed-width scientific form with 12 significant digits.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Renders curves as the canonical CSV document.
pub fn csv(curves: &[RateCurve]) -> String {
    let mut rows: Vec<(String, &'static str, f64, String)> = Vec::new();
    for c in curves {
        for s in &c.samples {
            let mut rest = String::new();
            match s.sigma {
                Some(sg) => _ = write!(rest, "{},", sig12(sg)),
                None => rest.push(','),
            }
            if let Some(r) = s.rate() {
                rest.push_str(&sig12(r));
            }
            rows.push((c.method.name().to_string(), c.label, s.tau, rest));
        }
    }
    rows.sort_by(|a, b| {
        (a.0.as_str(), a.1)
            .cmp(&(b.0.as_str(), b.1))
            .then(a.2.partial_cmp(&b.2).expect("grid taus are never NaN"))
    });
    let mut out = String::from("method,engine,tau,sigma,rate\n");
    for (method, engine, tau, rest) in rows {
        _ = writeln!(out, "{method},{engine},{},{rest}", sig12(tau));
    }
    out
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Renders curves as a static line plot (log-scaled tau axis when asked).
pub fn svg(curves: &[RateCurve], log_x: bool, title: &str) -> String {
    let xs = |t: f64| if log_x { t.log10() } else { t };
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max: f64 = 0.0;
    for c in curves {
        for s in &c.samples {
            if let Some(r) = s.rate() {
                x_min = x_min.min(xs(s.tau));
                x_max = x_max.max(xs(s.tau));
                y_max = y_max.max(r);
            }
        }
    }
    if !x_min.is_finite() || x_max <= x_min {
        (x_min, x_max) = (0.0, 1.0);
    }
    y_max = (y_max * 1.05).max(1e-9);

    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |t: f64| MARGIN_L + (xs(t) - x_min) / (x_max - x_min) * plot_w;
    let py = |r: f64| MARGIN_T + (1.0 - r / y_max) * plot_h;

    let mut out = String::new();
    _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" \
         viewBox=\"0 0 {SVG_W} {SVG_H}\">"
    );
    _ = writeln!(out, "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");
    _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>",
        MARGIN_L + plot_w / 2.0
    );

    // Axes and ticks.
    _ = writeln!(
        out,
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>"
    );
    for i in 0..=5 {
        let fx = x_min + (x_max - x_min) * i as f64 / 5.0;
        let tau = if log_x { 10f64.powf(fx) } else { fx };
        let x = MARGIN_L + plot_w * i as f64 / 5.0;
        _ = writeln!(
            out,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#333\"/>",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 5.0
        );
        _ = writeln!(
            out,
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{tau:.3}</text>",
            MARGIN_T + plot_h + 20.0
        );
        let r = y_max * i as f64 / 5.0;
        let y = py(r);
        _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"#333\"/>",
            MARGIN_L - 5.0
        );
        _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{r:.3}</text>",
            MARGIN_L - 9.0,
            y + 4.0
        );
    }
    _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">tau</text>",
        MARGIN_L + plot_w / 2.0,
        SVG_H - 12.0
    );
    _ = writeln!(
        out,
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">rate</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );

    // Series.
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = c
            .samples
            .iter()
            .filter_map(|s| s.rate().map(|r| format!("{:.2},{:.2}", px(s.tau), py(r))))
            .collect();
        if pts.len() >= 2 {
            _ = writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.6\"/>",
                pts.join(" ")
            );
        }
        let ly = MARGIN_T + 16.0 + 18.0 * i as f64;
        let lx = MARGIN_L + plot_w + 12.0;
        _ = writeln!(
            out,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>",
            lx + 22.0
        );
        _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" \
             font-size=\"12\">{} / {}</text>",
            lx + 28.0,
            ly + 4.0,
            c.method.name(),
            c.label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes one experiment's outputs into `dir`, named `<stem>.<ext>` for a
/// sectionless config and `<stem>_<section>.<ext>` otherwise. Returns the
/// written paths.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    section: &str,
    curves: &[RateCurve],
    formats: &[&str],
    log_x: bool,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let base = if section.is_empty() {
        stem.to_string()
    } else {
        format!("{stem}_{section}")
    };
    let mut written = Vec::new();
    for &fmt in formats {
        let (name, contents) = match fmt {
            "csv" => (format!("{base}.csv"), csv(curves)),
            "svg" => (format!("{base}.svg"), svg(curves, log_x, &base)),
            other => anyhow::bail!("unknown output format {other:?} (expected csv or svg)"),
        };
        let path = dir.join(name);
        fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
