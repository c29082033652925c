//! Minimal SVG line charts of report CSVs: ratio against the band index or
//! the dipole width, on log axes where the data allows it.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::report::CSV_HEADER;

#[derive(Debug, Clone)]
struct PlotPoint {
    x: f64,
    y: f64,
}

/// Read a report CSV and emit one SVG per statement group into `out_dir`.
/// Returns the written file names.
pub fn plot_csv(csv_path: &Path, out_dir: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(csv_path)
        .with_context(|| format!("cannot read {}", csv_path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != CSV_HEADER {
        bail!("unexpected CSV header: {header:?}");
    }
    let mut groups: BTreeMap<String, Vec<PlotPoint>> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            bail!("malformed CSV row: {line:?}");
        }
        let statement = fields[0].to_string();
        let f_id = fields[3];
        let n: Option<f64> = fields[4].parse().ok();
        let ratio: f64 = fields[7].parse().unwrap_or(f64::NAN);
        if !ratio.is_finite() {
            continue;
        }
        let group = groups.entry(statement).or_default();
        // x preference: band index, then a width suffix in f_id, then order.
        let x = n
            .or_else(|| f_id.rsplit_once('w').and_then(|(_, w)| w.parse::<f64>().ok()))
            .unwrap_or((group.len() + 1) as f64);
        group.push(PlotPoint { x, y: ratio });
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (statement, points) in groups {
        if points.is_empty() {
            continue;
        }
        let svg = render_svg(&statement, &points);
        let name = format!("{statement}.svg");
        std::fs::write(out_dir.join(&name), svg)?;
        written.push(name);
    }
    Ok(written)
}

fn render_svg(title: &str, points: &[PlotPoint]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 60.0;
    let log_x = points.iter().all(|p| p.x > 0.0);
    let log_y = points.iter().all(|p| p.y > 0.0);
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        xmin = xmin.min(tx(p.x));
        xmax = xmax.max(tx(p.x));
        ymin = ymin.min(ty(p.y));
        ymax = ymax.max(ty(p.y));
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let px = |v: f64| M + (tx(v) - xmin) / (xmax - xmin) * (W - 2.0 * M);
    let py = |v: f64| H - M - (ty(v) - ymin) / (ymax - ymin) * (H - 2.0 * M);

    let mut sorted: Vec<&PlotPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let path: Vec<String> =
        sorted.iter().map(|p| format!("{:.3},{:.3}", px(p.x), py(p.y))).collect();
    let dots: String = sorted
        .iter()
        .map(|p| {
            format!(
                "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"3\" fill=\"#27598e\"/>",
                px(p.x),
                py(p.y)
            )
        })
        .collect();
    let x_label = if log_x { "x (log10)" } else { "x" };
    let y_label = if log_y { "ratio (log10)" } else { "ratio" };
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tm}\" y=\"24\" font-family=\"monospace\" font-size=\"16\">{title}</text>\n",
            "<line x1=\"{m}\" y1=\"{hm}\" x2=\"{wm}\" y2=\"{hm}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{hm}\" stroke=\"black\"/>\n",
            "<text x=\"{m}\" y=\"{hl}\" font-family=\"monospace\" font-size=\"12\">{xmin:.3} .. {xmax:.3} {x_label}</text>\n",
            "<text x=\"8\" y=\"{m}\" font-family=\"monospace\" font-size=\"12\">{ymin:.3} .. {ymax:.3} {y_label}</text>\n",
            "<polyline points=\"{path}\" fill=\"none\" stroke=\"#27598e\" stroke-width=\"1.5\"/>\n",
            "{dots}\n",
            "</svg>\n"
        ),
        w = W,
        h = H,
        m = M,
        tm = M,
        hm = H - M,
        wm = W - M,
        hl = H - M / 2.0,
        title = title,
        xmin = xmin,
        xmax = xmax,
        ymin = ymin,
        ymax = ymax,
        x_label = x_label,
        y_label = y_label,
        path = path.join(" "),
        dots = dots,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_svg_for_simple_group() {
        let dir = std::env::temp_dir().join("mazyalab_plot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let csv = dir.join("report.csv");
        let body = format!(
            "{CSV_HEADER}\n\
             main_ratio,k,p,dipole_w0.125000000,,1.0e0,2.0e0,5.0e-1,0.0e0,info,abc\n\
             main_ratio,k,p,dipole_w0.062500000,,1.0e0,2.0e0,6.0e-1,0.0e0,info,abc\n"
        );
        std::fs::write(&csv, body).unwrap();
        let files = plot_csv(&csv, &dir).unwrap();
        assert_eq!(files, vec!["main_ratio.svg".to_string()]);
        let svg = std::fs::read_to_string(dir.join("main_ratio.svg")).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("main_ratio"));
    }
}
