//! Dependency-free SVG figure emission: radar, heatmap, stacked bars,
//! grouped bars. SVG keeps the figures diffable in tests and
//! resolution-independent.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Qualitative palette cycled across series.
const PALETTE: [&str; 9] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
    "#9c755f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Radar,
    Heatmap,
    StackedBar,
    GroupedBar,
}

impl std::str::FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "radar" => Ok(ChartKind::Radar),
            "heatmap" => Ok(ChartKind::Heatmap),
            "stacked_bar" => Ok(ChartKind::StackedBar),
            "grouped_bar" => Ok(ChartKind::GroupedBar),
            other => Err(Error::Contract(format!(
                "unknown chart kind `{other}` (expected radar, heatmap, stacked_bar, grouped_bar)"
            ))),
        }
    }
}

/// Data behind one figure. Radar plots use exactly one row and require
/// `entropy_nats`; the other kinds plot all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartData {
    pub title: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub entropy_nats: Option<f64>,
}

impl ChartData {
    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.col_labels.is_empty() {
            return Err(Error::Contract("chart data is empty".into()));
        }
        if self.row_labels.len() != self.rows.len() {
            return Err(Error::Contract(format!(
                "{} row labels for {} rows",
                self.row_labels.len(),
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.col_labels.len() {
                return Err(Error::Contract(format!(
                    "row {i} has {} values for {} column labels",
                    row.len(),
                    self.col_labels.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("non-finite value {v} in row {i}")));
            }
        }
        Ok(())
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        out,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
}

fn title_text(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        WIDTH / 2.0,
        escape_xml(title)
    );
}

fn legend(out: &mut String, labels: &[String]) {
    let _ = writeln!(out, "<g class=\"legend\">");
    for (i, label) in labels.iter().enumerate() {
        let y = 50.0 + i as f64 * 18.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>",
            WIDTH - 150.0,
            y - 10.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            WIDTH - 134.0,
            y,
            escape_xml(label)
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Renders the chart and writes it to `out_path`; returns the SVG text.
/// On contract violations no file is written.
pub fn emit_chart(kind: ChartKind, data: &ChartData, out_path: &Path) -> Result<String> {
    let svg = render_chart(kind, data)?;
    std::fs::write(out_path, &svg)?;
    Ok(svg)
}

/// Pure rendering, shared by [`emit_chart`] and tests.
pub fn render_chart(kind: ChartKind, data: &ChartData) -> Result<String> {
    data.validate()?;
    let mut out = String::new();
    svg_open(&mut out);
    match kind {
        ChartKind::Radar => render_radar(&mut out, data)?,
        ChartKind::Heatmap => render_heatmap(&mut out, data),
        ChartKind::StackedBar => render_stacked(&mut out, data)?,
        ChartKind::GroupedBar => render_grouped(&mut out, data),
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn render_radar(out: &mut String, data: &ChartData) -> Result<()> {
    if data.rows.len() != 1 {
        return Err(Error::Contract(format!(
            "radar plots exactly one profile, got {} rows",
            data.rows.len()
        )));
    }
    let entropy = data
        .entropy_nats
        .ok_or_else(|| Error::Contract("radar chart requires entropy_nats".into()))?;
    let probs = &data.rows[0];
    let n = probs.len();
    if n < 3 {
        return Err(Error::Contract("radar needs at least 3 axes".into()));
    }
    title_text(out, &format!("{} (Entropy: {:.4})", data.title, entropy));
    let cx = WIDTH / 2.0;
    let cy = HEIGHT / 2.0 + 10.0;
    let radius = (HEIGHT / 2.0) - MARGIN - 20.0;
    let max = probs.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let angle = |i: usize| -> f64 {
        std::f64::consts::TAU * i as f64 / n as f64 - std::f64::consts::FRAC_PI_2
    };
    let _ = writeln!(out, "<g class=\"chart chart-radar\">");
    // Spokes and axis labels.
    for (i, label) in data.col_labels.iter().enumerate() {
        let a = angle(i);
        let (x, y) = (cx + radius * a.cos(), cy + radius * a.sin());
        let _ = writeln!(
            out,
            "<line x1=\"{cx}\" y1=\"{cy}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#cccccc\"/>"
        );
        let (lx, ly) = (cx + (radius + 14.0) * a.cos(), cy + (radius + 14.0) * a.sin());
        let _ = writeln!(
            out,
            "<text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            escape_xml(label)
        );
    }
    // Reference rings.
    for frac in [0.25, 0.5, 0.75, 1.0] {
        let pts = ring_points(cx, cy, radius * frac, n, &angle);
        let _ = writeln!(
            out,
            "<polygon points=\"{pts}\" fill=\"none\" stroke=\"#eeeeee\"/>"
        );
    }
    // The profile polygon, scaled so the largest probability reaches the rim.
    let pts: Vec<String> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let r = radius * p / max;
            let a = angle(i);
            format!("{:.2},{:.2}", cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    let _ = writeln!(
        out,
        "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.4\" stroke=\"{}\"/>",
        pts.join(" "),
        PALETTE[0],
        PALETTE[0]
    );
    let _ = writeln!(out, "</g>");
    Ok(())
}

fn ring_points(cx: f64, cy: f64, r: f64, n: usize, angle: &dyn Fn(usize) -> f64) -> String {
    (0..n)
        .map(|i| {
            let a = angle(i);
            format!("{:.2},{:.2}", cx + r * a.cos(), cy + r * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_heatmap(out: &mut String, data: &ChartData) {
    title_text(out, &data.title);
    let rows = data.rows.len();
    let cols = data.col_labels.len();
    let cell_w = (WIDTH - 2.0 * MARGIN) / cols as f64;
    let cell_h = (HEIGHT - 2.0 * MARGIN) / rows as f64;
    let max = data
        .rows
        .iter()
        .flatten()
        .cloned()
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let _ = writeln!(out, "<g class=\"chart chart-heatmap\">");
    let mut bad_rows = Vec::new();
    for (i, row) in data.rows.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            bad_rows.push((i, sum));
        }
        for (j, &v) in row.iter().enumerate() {
            // Intensity monotone in value: white at 0 up to full blue at max.
            let t = (v / max).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let x = MARGIN + j as f64 * cell_w;
            let y = MARGIN + i as f64 * cell_h;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell_w:.2}\" height=\"{cell_h:.2}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#ffffff\"/>"
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            MARGIN - 6.0,
            MARGIN + (i as f64 + 0.6) * cell_h,
            escape_xml(&data.row_labels[i])
        );
    }
    for (j, label) in data.col_labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            MARGIN + (j as f64 + 0.5) * cell_w,
            HEIGHT - MARGIN + 16.0,
            escape_xml(label)
        );
    }
    for (k, (i, sum)) in bad_rows.iter().enumerate() {
        let msg = format!("warning: row {i} sums to {sum:.6}, expected 1");
        eprintln!("{msg}");
        let _ = writeln!(
            out,
            "<text class=\"warning\" x=\"{MARGIN}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#cc0000\">{}</text>",
            40.0 + k as f64 * 14.0,
            escape_xml(&msg)
        );
    }
    let _ = writeln!(out, "</g>");
}

fn render_stacked(out: &mut String, data: &ChartData) -> Result<()> {
    title_text(out, &data.title);
    let rows = data.rows.len();
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = (WIDTH - 2.0 * MARGIN - 160.0) / rows as f64;
    let max_total = data
        .rows
        .iter()
        .map(|r| r.iter().sum::<f64>())
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let _ = writeln!(out, "<g class=\"chart chart-stacked\">");
    for (i, row) in data.rows.iter().enumerate() {
        if row.iter().any(|&v| v < 0.0) {
            return Err(Error::Contract(format!(
                "stacked bars require non-negative values (row {i})"
            )));
        }
        let x = MARGIN + i as f64 * bar_w;
        let mut y = HEIGHT - MARGIN;
        for (j, &v) in row.iter().enumerate() {
            let h = plot_h * v / max_total;
            y -= h;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                x + 2.0,
                bar_w - 4.0,
                PALETTE[j % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            x + bar_w / 2.0,
            HEIGHT - MARGIN + 16.0,
            escape_xml(&data.row_labels[i])
        );
    }
    let _ = writeln!(out, "</g>");
    legend(out, &data.col_labels);
    Ok(())
}

fn render_grouped(out: &mut String, data: &ChartData) {
    title_text(out, &data.title);
    let rows = data.rows.len();
    let cols = data.col_labels.len();
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let group_w = (WIDTH - 2.0 * MARGIN - 160.0) / rows as f64;
    let bar_w = group_w / (cols as f64 + 1.0);
    let max = data
        .rows
        .iter()
        .flatten()
        .cloned()
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let _ = writeln!(out, "<g class=\"chart chart-grouped\">");
    for (i, row) in data.rows.iter().enumerate() {
        let gx = MARGIN + i as f64 * group_w;
        for (j, &v) in row.iter().enumerate() {
            let h = plot_h * (v.max(0.0) / max);
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                gx + j as f64 * bar_w,
                HEIGHT - MARGIN - h,
                bar_w * 0.9,
                PALETTE[j % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
            gx + group_w / 2.0,
            HEIGHT - MARGIN + 16.0,
            escape_xml(&data.row_labels[i])
        );
    }
    let _ = writeln!(out, "</g>");
    legend(out, &data.col_labels);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_profile_data() -> ChartData {
        ChartData {
            title: "vision_brittle".into(),
            row_labels: vec!["profile".into()],
            col_labels: (0..9).map(|i| format!("a{i}")).collect(),
            rows: vec![vec![1.0 / 9.0; 9]],
            entropy_nats: Some(9f64.ln()),
        }
    }

    /// Minimal well-formedness check: every opened tag closes, attributes
    /// are quoted, one chart root group exists.
    fn assert_well_formed(svg: &str) {
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<g class=\"chart").count(), 1);
        for tag in ["g", "text", "svg"] {
            let open = svg.matches(&format!("<{tag} ")).count() + svg.matches(&format!("<{tag}>")).count();
            let close = svg.matches(&format!("</{tag}>")).count();
            assert_eq!(open, close, "unbalanced <{tag}>");
        }
        assert_eq!(svg.matches('"').count() % 2, 0, "unbalanced quotes");
    }

    #[test]
    fn radar_uniform_has_nine_axes_and_entropy_title() {
        let svg = render_chart(ChartKind::Radar, &uniform_profile_data()).unwrap();
        assert_well_formed(&svg);
        assert!(svg.contains("2.1972"), "title should carry the entropy");
        assert_eq!(svg.matches("<line ").count(), 9);
        // Uniform profile: all spokes at the rim, so the data polygon
        // equals the outermost reference ring.
        let polygons: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<polygon"))
            .collect();
        let rim = polygons[polygons.len() - 2];
        let profile = polygons[polygons.len() - 1];
        let extract = |s: &str| {
            let i = s.find("points=\"").unwrap() + 8;
            let j = s[i..].find('"').unwrap();
            s[i..i + j].to_string()
        };
        assert_eq!(extract(rim), extract(profile));
    }

    #[test]
    fn radar_requires_entropy_and_single_row() {
        let mut d = uniform_profile_data();
        d.entropy_nats = None;
        assert!(render_chart(ChartKind::Radar, &d).is_err());
        let mut d = uniform_profile_data();
        d.rows.push(vec![1.0 / 9.0; 9]);
        d.row_labels.push("extra".into());
        assert!(render_chart(ChartKind::Radar, &d).is_err());
    }

    #[test]
    fn heatmap_warns_on_unnormalized_rows() {
        let d = ChartData {
            title: "matrix".into(),
            row_labels: vec!["m0".into()],
            col_labels: vec!["a0".into(), "a1".into()],
            rows: vec![vec![0.5, 0.9]],
            entropy_nats: None,
        };
        let svg = render_chart(ChartKind::Heatmap, &d).unwrap();
        assert_well_formed(&svg);
        assert!(svg.contains("class=\"warning\""));
        assert!(svg.contains("row 0 sums to 1.4"));
    }

    #[test]
    fn heatmap_intensity_is_monotone() {
        let d = ChartData {
            title: "matrix".into(),
            row_labels: vec!["m0".into()],
            col_labels: vec!["a0".into(), "a1".into(), "a2".into()],
            rows: vec![vec![0.1, 0.3, 0.6]],
            entropy_nats: None,
        };
        let svg = render_chart(ChartKind::Heatmap, &d).unwrap();
        let shades: Vec<u32> = svg
            .lines()
            .filter(|l| l.contains("fill=\"rgb("))
            .map(|l| {
                let i = l.find("rgb(").unwrap() + 4;
                let j = l[i..].find(',').unwrap();
                l[i..i + j].parse().unwrap()
            })
            .collect();
        assert_eq!(shades.len(), 3);
        assert!(shades[0] > shades[1] && shades[1] > shades[2]);
    }

    #[test]
    fn bar_charts_carry_legends() {
        let d = ChartData {
            title: "bars".into(),
            row_labels: vec!["m0".into(), "m1".into()],
            col_labels: vec!["a0".into(), "a1".into()],
            rows: vec![vec![0.4, 0.6], vec![0.7, 0.3]],
            entropy_nats: None,
        };
        for kind in [ChartKind::StackedBar, ChartKind::GroupedBar] {
            let svg = render_chart(kind, &d).unwrap();
            assert_well_formed(&svg);
            assert!(svg.contains("class=\"legend\""));
            assert!(svg.contains(">a0</text>") && svg.contains(">a1</text>"));
        }
    }

    #[test]
    fn empty_data_is_contract_error_and_writes_nothing() {
        let d = ChartData {
            title: "empty".into(),
            row_labels: vec![],
            col_labels: vec![],
            rows: vec![],
            entropy_nats: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chart.svg");
        assert!(emit_chart(ChartKind::Heatmap, &d, &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let d = ChartData {
            title: "bad".into(),
            row_labels: vec!["m0".into()],
            col_labels: vec!["a0".into(), "a1".into()],
            rows: vec![vec![0.5]],
            entropy_nats: None,
        };
        assert!(render_chart(ChartKind::GroupedBar, &d).is_err());
    }

    #[test]
    fn labels_are_xml_escaped() {
        let d = ChartData {
            title: "a & b <c>".into(),
            row_labels: vec!["r<0>".into()],
            col_labels: vec!["x&y".into(), "z".into()],
            rows: vec![vec![0.5, 0.5]],
            entropy_nats: None,
        };
        let svg = render_chart(ChartKind::Heatmap, &d).unwrap();
        assert!(svg.contains("a &amp; b &lt;c&gt;"));
        assert!(svg.contains("x&amp;y"));
        assert!(!svg.contains("x&y"));
    }
}
