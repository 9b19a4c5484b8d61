//! Minimal SVG line plots for metric streams.

use std::path::Path;

use crate::error::{Error, Result};

use super::metrics::MetricsRecord;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Renders one polyline per named metric against iteration number, with
/// axes, tick labels, and a legend.
pub fn plot_svg(path: impl AsRef<Path>, records: &[MetricsRecord], names: &[&str]) -> Result<()> {
    if records.is_empty() || names.is_empty() {
        return Err(Error::config(
            "plot",
            "need at least one record and one metric",
        ));
    }
    for name in names {
        if records[0].get(name).is_none() {
            return Err(Error::config(
                "plot",
                format!("metric {name} not in stream"),
            ));
        }
    }
    let (w, h) = (760.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 45.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let xs: Vec<f64> = records.iter().map(|r| r.iteration as f64).collect();
    let (x0, x1) = (xs[0], *xs.last().unwrap());
    let xspan = (x1 - x0).max(1.0);
    let mut y0 = f64::INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for r in records {
        for name in names {
            let v = r.get(name).unwrap();
            y0 = y0.min(v);
            y1 = y1.max(v);
        }
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
        y0 -= 1.0;
    }
    let yspan = y1 - y0;
    let px = |x: f64| ml + (x - x0) / xspan * pw;
    let py = |y: f64| mt + (1.0 - (y - y0) / yspan) * ph;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph
    ));
    for k in 0..=4 {
        let fx = x0 + xspan * k as f64 / 4.0;
        let fy = y0 + yspan * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.0}</text>\n",
            px(fx),
            mt + ph + 16.0,
            fx
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.4}</text>\n",
            ml - 6.0,
            py(fy) + 4.0,
            fy
        ));
        svg.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{0:.1}\" x2=\"{1}\" y2=\"{0:.1}\" stroke=\"#dddddd\"/>\n",
            py(fy),
            ml + pw
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">iteration</text>\n",
        ml + pw / 2.0,
        h - 8.0
    ));

    for (i, name) in names.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = records
            .iter()
            .map(|r| {
                format!(
                    "{:.2},{:.2}",
                    px(r.iteration as f64),
                    py(r.get(name).unwrap())
                )
            })
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = mt + 14.0 * (i as f64 + 1.0);
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            ml + pw - 130.0,
            ml + pw - 110.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\">{name}</text>\n",
            ml + pw - 104.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}
