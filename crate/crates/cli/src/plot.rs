//! Chart emission. Consumes only the toolkit's CSV files — never live
//! simulation state — and renders static SVG line charts: acceptance
//! ratio versus phase (or arrival) and the execution-time sweep.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A named polyline.
struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

enum CsvKind {
    Phase,
    Cumulative,
    Timing,
}

fn classify(headers: &csv::StringRecord, path: &Path) -> Result<CsvKind, String> {
    let cols: Vec<&str> = headers.iter().collect();
    match cols.as_slice() {
        ["phase", "acceptance_ratio"] => Ok(CsvKind::Phase),
        ["arrival", "cumulative_ratio"] => Ok(CsvKind::Cumulative),
        ["agent", "servers", "vnf_count", "mean_seconds"] => Ok(CsvKind::Timing),
        other => Err(format!(
            "{}: unrecognized CSV header {other:?}",
            path.display()
        )),
    }
}

fn parse_f64(field: &str, path: &Path, row: usize) -> Result<f64, String> {
    field
        .parse::<f64>()
        .map_err(|_| format!("{} row {row}: invalid number {field:?}", path.display()))
}

fn series_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads every input CSV, groups series by chart kind, and writes one SVG
/// per kind into `out_dir`. Returns the files written.
pub fn render_all(inputs: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut ratio_series: Vec<Series> = Vec::new();
    let mut cumulative_series: Vec<Series> = Vec::new();
    let mut timing_series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();

    for path in inputs {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        let headers = rdr
            .headers()
            .map_err(|e| format!("{}: {e}", path.display()))?
            .clone();
        let kind = classify(&headers, path)?;
        let mut rows = 0usize;
        match kind {
            CsvKind::Phase | CsvKind::Cumulative => {
                let mut points = Vec::new();
                for (i, rec) in rdr.records().enumerate() {
                    let row = i + 2; // 1-based, after the header line
                    let rec = rec.map_err(|e| format!("{} row {row}: {e}", path.display()))?;
                    if rec.len() != 2 {
                        return Err(format!(
                            "{} row {row}: expected 2 fields, got {}",
                            path.display(),
                            rec.len()
                        ));
                    }
                    let x = parse_f64(&rec[0], path, row)?;
                    let y = parse_f64(&rec[1], path, row)?;
                    points.push((x, y));
                    rows += 1;
                }
                let s = Series {
                    name: series_name(path),
                    points,
                };
                match kind {
                    CsvKind::Phase => ratio_series.push(s),
                    _ => cumulative_series.push(s),
                }
            }
            CsvKind::Timing => {
                for (i, rec) in rdr.records().enumerate() {
                    let row = i + 2;
                    let rec = rec.map_err(|e| format!("{} row {row}: {e}", path.display()))?;
                    if rec.len() != 4 {
                        return Err(format!(
                            "{} row {row}: expected 4 fields, got {}",
                            path.display(),
                            rec.len()
                        ));
                    }
                    let mean = parse_f64(&rec[3], path, row)?;
                    let points = timing_series.entry(rec[0].to_string()).or_default();
                    // Sweep points are plotted in file order; the x axis is
                    // the sweep-point ordinal.
                    let x = points.len() as f64 + 1.0;
                    points.push((x, mean));
                    rows += 1;
                }
            }
        }
        if rows == 0 {
            return Err(format!("{}: no data rows", path.display()));
        }
    }

    let mut written = Vec::new();
    if !ratio_series.is_empty() {
        let path = out_dir.join("acceptance.svg");
        std::fs::write(
            &path,
            render_chart("Acceptance ratio per phase", "phase", &ratio_series),
        )
        .map_err(|e| e.to_string())?;
        written.push(path);
    }
    if !cumulative_series.is_empty() {
        let path = out_dir.join("cumulative.svg");
        std::fs::write(
            &path,
            render_chart(
                "Cumulative acceptance ratio",
                "arrival",
                &cumulative_series,
            ),
        )
        .map_err(|e| e.to_string())?;
        written.push(path);
    }
    if !timing_series.is_empty() {
        let series: Vec<Series> = timing_series
            .into_iter()
            .map(|(name, points)| Series { name, points })
            .collect();
        let path = out_dir.join("timing.svg");
        std::fs::write(
            &path,
            render_chart("Mean placement seconds", "sweep point", &series),
        )
        .map_err(|e| e.to_string())?;
        written.push(path);
    }
    if written.is_empty() {
        return Err("no input CSVs given".into());
    }
    Ok(written)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn render_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (0.0f64, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_max.is_finite() {
        (x_min, x_max) = (0.0, 1.0);
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_T + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        MARGIN_L + plot_w / 2.0
    ));

    // Axes with 5 ticks per dimension.
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#333\"/>\n"
    ));
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            sx(fx),
            MARGIN_T + plot_h + 18.0,
            trim_num(fx)
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            sy(fy) + 4.0,
            trim_num(fy)
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{0:.1}\" x2=\"{1:.1}\" y2=\"{0:.1}\" \
             stroke=\"#ddd\"/>\n",
            sy(fy),
            MARGIN_L + plot_w
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x_label}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
        let ly = MARGIN_T + 14.0 * i as f64 + 8.0;
        svg.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            MARGIN_L + plot_w + 8.0,
            MARGIN_L + plot_w + 28.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            MARGIN_L + plot_w + 32.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}
