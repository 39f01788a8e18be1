//! Deterministic SVG rendering of radar charts and error-volume histograms.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::evaluate::EvaluationReport;
use crate::error::{Error, Result};
use crate::error_analysis::{ErrorCategory, HistogramBin};
use crate::format::fmt6;
use crate::lesion_metrics::Metric;

pub const RADAR_METRICS: [Metric; 5] = [Metric::Ndsc, Metric::Dsc, Metric::F1, Metric::Recall, Metric::Precision];
const RADAR_LABELS: [&str; 5] = ["nDSC", "DSC", "F1", "Recall", "Precision"];
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Mean and 90% interval of each radar axis for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarSeries {
    pub name: String,
    pub mean: [f64; 5],
    pub low: [f64; 5],
    pub high: [f64; 5],
}

impl RadarSeries {
    pub fn from_report(name: impl Into<String>, report: &EvaluationReport) -> Result<Self> {
        let name = name.into();
        let mut s = RadarSeries {
            name,
            mean: [0.0; 5],
            low: [0.0; 5],
            high: [0.0; 5],
        };
        for (i, m) in RADAR_METRICS.iter().enumerate() {
            let summary = report.overall(*m);
            let (Some(mean), Some(lo), Some(hi)) = (
                summary.and_then(|x| x.mean),
                summary.and_then(|x| x.ci90_low),
                summary.and_then(|x| x.ci90_high),
            ) else {
                return Err(Error::InvalidArgument(format!(
                    "report for {} has no overall {} mean",
                    s.name,
                    m.name()
                )));
            };
            s.mean[i] = mean;
            s.low[i] = lo;
            s.high[i] = hi;
        }
        Ok(s)
    }
}

/// Coordinate with two decimals and no negative zero.
fn c(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const RADAR_CX: f64 = 240.0;
const RADAR_CY: f64 = 230.0;
const RADAR_R: f64 = 170.0;

fn radar_point(axis: usize, value: f64) -> (f64, f64) {
    let theta = -PI / 2.0 + 2.0 * PI * axis as f64 / 5.0;
    let r = RADAR_R * value.clamp(0.0, 1.0);
    (RADAR_CX + r * theta.cos(), RADAR_CY + r * theta.sin())
}

fn polygon_points(values: &[f64; 5]) -> String {
    (0..5)
        .map(|i| {
            let (x, y) = radar_point(i, values[i]);
            format!("{},{}", c(x), c(y))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn ring_path(values: &[f64; 5]) -> String {
    let mut d = String::new();
    for (i, &v) in values.iter().enumerate() {
        let (x, y) = radar_point(i, v);
        let _ = write!(d, "{}{},{} ", if i == 0 { 'M' } else { 'L' }, c(x), c(y));
    }
    d.push('Z');
    d
}

/// One polygon per model over nDSC, DSC, F1, Recall and Precision, with
/// the 90% interval drawn as a translucent band.
pub fn render_radar(series: &[RadarSeries]) -> String {
    let height = 480 + 20 * series.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="480" height="{height}" viewBox="0 0 480 {height}" font-family="sans-serif" font-size="12">"#
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for k in 1..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="none" stroke="#cccccc" stroke-width="1"/>"##,
            polygon_points(&[v; 5])
        );
    }
    for (i, label) in RADAR_LABELS.iter().enumerate() {
        let (x, y) = radar_point(i, 1.0);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999999" stroke-width="1"/>"##,
            c(RADAR_CX),
            c(RADAR_CY),
            c(x),
            c(y)
        );
        let (lx, ly) = {
            let theta = -PI / 2.0 + 2.0 * PI * i as f64 / 5.0;
            (RADAR_CX + (RADAR_R + 22.0) * theta.cos(), RADAR_CY + (RADAR_R + 22.0) * theta.sin() + 4.0)
        };
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#, c(lx), c(ly));
    }
    for k in 1..=5 {
        let (x, y) = radar_point(0, k as f64 / 5.0);
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" font-size="9" fill="#666666">{}</text>"##,
            c(x + 4.0),
            c(y + 3.0),
            fmt6(k as f64 / 5.0)
        );
    }
    for (k, m) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<path d="{} {}" fill="{color}" fill-opacity="0.15" fill-rule="evenodd" stroke="none"/>"#,
            ring_path(&m.high),
            ring_path(&m.low)
        );
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            polygon_points(&m.mean)
        );
        for i in 0..5 {
            let (x, y) = radar_point(i, m.mean[i]);
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="3" fill="{color}"/>"#, c(x), c(y));
        }
        let ly = 470 + 20 * k;
        let _ = writeln!(
            s,
            r#"<rect x="20" y="{}" width="12" height="12" fill="{color}"/><text x="38" y="{ly}">{}</text>"#,
            ly - 10,
            escape(&m.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 160.0;
const MARGIN_L: f64 = 50.0;
const MARGIN_R: f64 = 20.0;
const PLOT_H: f64 = 110.0;

/// Stacked panels (TPL, FPL, FNL) of component counts on a log10 volume
/// axis.
pub fn render_histogram(title: &str, bins: &[HistogramBin]) -> String {
    let cats: Vec<ErrorCategory> = ErrorCategory::ALL
        .into_iter()
        .filter(|cat| bins.iter().any(|b| b.category == *cat))
        .collect();
    let height = 30.0 + PANEL_H * cats.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="11">"#,
        c(PANEL_W),
        c(height),
        c(PANEL_W),
        c(height)
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        c(PANEL_W / 2.0),
        escape(title)
    );
    if cats.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="100" text-anchor="middle">no lesion components</text>"#, c(PANEL_W / 2.0));
        s.push_str("</svg>\n");
        return s;
    }
    let lo = bins.iter().map(|b| b.low_mm3).fold(f64::INFINITY, f64::min).log10();
    let hi = bins.iter().map(|b| b.high_mm3).fold(0.0, f64::max).log10();
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let xpos = |v: f64| MARGIN_L + plot_w * (v.log10() - lo) / (hi - lo);

    for (p, cat) in cats.iter().enumerate() {
        let top = 30.0 + PANEL_H * p as f64;
        let base = top + PLOT_H;
        let color = PALETTE[p];
        let panel: Vec<&HistogramBin> = bins.iter().filter(|b| b.category == *cat).collect();
        let max = panel.iter().map(|b| b.count).max().unwrap_or(0).max(1) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-weight="bold">{}</text>"#,
            c(MARGIN_L),
            c(top + 10.0),
            cat.as_str()
        );
        for b in &panel {
            if b.count == 0 {
                continue;
            }
            let (x0, x1) = (xpos(b.low_mm3), xpos(b.high_mm3));
            let h = (PLOT_H - 16.0) * b.count as f64 / max;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}" stroke="white" stroke-width="0.5"/>"#,
                c(x0),
                c(base - h),
                c(x1 - x0),
                c(h)
            );
        }
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333"/>"##,
            c(MARGIN_L),
            c(base),
            c(PANEL_W - MARGIN_R),
            c(base)
        );
        let _ = writeln!(
            s,
            r##"<text x="{}" y="{}" text-anchor="end" fill="#666666">{}</text>"##,
            c(MARGIN_L - 4.0),
            c(base - (PLOT_H - 16.0) + 4.0),
            max as u64
        );
        let mut d = lo.ceil() as i32;
        while d as f64 <= hi + 1e-9 {
            let x = MARGIN_L + plot_w * (d as f64 - lo) / (hi - lo);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#333333"/><text x="{}" y="{}" text-anchor="middle">{}</text>"##,
                c(x),
                c(base),
                c(x),
                c(base + 4.0),
                c(x),
                c(base + 16.0),
                fmt6(10f64.powi(d))
            );
            d += 1;
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">component volume (mm³, log scale)</text>"#,
            c(MARGIN_L + plot_w / 2.0),
            c(base + 30.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_model_is_outer_pentagon() {
        let s = RadarSeries {
            name: "m".into(),
            mean: [1.0; 5],
            low: [1.0; 5],
            high: [1.0; 5],
        };
        let svg = render_radar(std::slice::from_ref(&s));
        let outer = polygon_points(&[1.0; 5]);
        assert!(svg.contains(&format!(r##"<polygon points="{outer}" fill="none" stroke="#1f77b4""##)));
    }

    #[test]
    fn identical_models_overlap() {
        let s = RadarSeries {
            name: "a<b".into(),
            mean: [0.5, 0.6, 0.7, 0.8, 0.9],
            low: [0.4; 5],
            high: [0.9; 5],
        };
        let t = RadarSeries { name: "b".into(), ..s.clone() };
        let svg = render_radar(&[s.clone(), t]);
        let pts = polygon_points(&s.mean);
        assert_eq!(svg.matches(&format!("points=\"{pts}\"")).count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn empty_histogram() {
        assert!(render_histogram("x", &[]).contains("no lesion components"));
    }
}
