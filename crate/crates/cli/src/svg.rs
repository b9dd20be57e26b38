//! Minimal standalone SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use dinq::evalharness::Curve;

use crate::error::{CliError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = ["#d62728", "#2ca02c", "#8c564b", "#17becf", "#bcbd22", "#7f7f7f"];

/// Line color for an agent label: DQN black, DDQN purple, DIN blue, SQL orange.
pub fn agent_color(label: &str, index: usize) -> &'static str {
    let base = label.split([':', '-']).next().unwrap_or(label).to_ascii_lowercase();
    match base.as_str() {
        "dqn" => "#000000",
        "ddqn" => "#800080",
        "din" => "#1f3fff",
        "sql" => "#ff8c00",
        _ => PALETTE[index % PALETTE.len()],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    fn of(curves: &[Curve]) -> Bounds {
        let mut b = Bounds {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in curves.iter().flat_map(|c| c.points()) {
            b.x_min = b.x_min.min(*x as f64);
            b.x_max = b.x_max.max(*x as f64);
            b.y_min = b.y_min.min(*y);
            b.y_max = b.y_max.max(*y);
        }
        if b.x_max == b.x_min {
            b.x_min -= 1.0;
            b.x_max += 1.0;
        }
        if b.y_max == b.y_min {
            let pad = 0.1 * b.y_min.abs().max(1.0);
            b.y_min -= pad;
            b.y_max += pad;
        }
        b
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Renders one polyline per curve plus a legend.
pub fn render_svg(curves: &[Curve], labels: &[String], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    if curves.is_empty() || curves.iter().any(|c| c.is_empty()) {
        return Err(dinq::Error::InvalidInput("nothing to plot".into()).into());
    }
    if labels.len() != curves.len() {
        return Err(dinq::Error::InvalidInput(format!("{} labels for {} curves", labels.len(), curves.len())).into());
    }
    let b = Bounds::of(curves);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - b.x_min) / (b.x_max - b.x_min) * plot_w;
    let sy = |y: f64| TOP + (b.y_max - y) / (b.y_max - b.y_min) * plot_h;

    let mut out = String::new();
    let w = &mut out;
    // fmt::Write into a String cannot fail.
    let _ = writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(w, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        w,
        r#"<g class="axes" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}" stroke="black" fill="none">"#,
        b.x_min, b.x_max, b.y_min, b.y_max
    );
    let _ = writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}"/>"#);
    let _ = writeln!(w, "</g>");
    let text = |w: &mut String, x: f64, y: f64, anchor: &str, body: &str| {
        let _ = writeln!(w, r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#, escape(body));
    };
    text(w, LEFT, HEIGHT - BOTTOM + 16.0, "start", &tick(b.x_min));
    text(w, LEFT + plot_w, HEIGHT - BOTTOM + 16.0, "end", &tick(b.x_max));
    text(w, LEFT - 6.0, TOP + 10.0, "end", &tick(b.y_max));
    text(w, LEFT - 6.0, TOP + plot_h, "end", &tick(b.y_min));
    text(w, LEFT + plot_w / 2.0, HEIGHT - 12.0, "middle", x_label);
    let _ = writeln!(
        w,
        r#"<text x="16" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {y:.1})">{}</text>"#,
        escape(y_label),
        y = TOP + plot_h / 2.0
    );

    for (i, (curve, label)) in curves.iter().zip(labels).enumerate() {
        let color = agent_color(label, i);
        let points: Vec<String> = curve
            .points()
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x as f64), sy(*y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            w,
            r#"<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text></g>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(label)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

pub fn emit_svg(curves: &[Curve], labels: &[String], title: &str, y_label: &str, path: &Path) -> Result<()> {
    let svg = render_svg(curves, labels, title, "training iteration", y_label)?;
    std::fs::write(path, svg).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(u64, f64)]) -> Curve {
        Curve::new(points.to_vec()).unwrap()
    }

    fn attr(svg: &str, name: &str) -> f64 {
        let start = svg.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
        let end = start + svg[start..].find('"').unwrap();
        svg[start..end].parse().unwrap()
    }

    #[test]
    fn constant_curve_gives_one_polyline() {
        let svg = render_svg(&[curve(&[(0, 2.0), (10, 2.0)])], &["dqn".into()], "t", "x", "y").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn two_curves_two_legend_entries() {
        let curves = [curve(&[(0, 0.0), (5, 1.0)]), curve(&[(0, 1.0), (5, 3.0)])];
        let svg = render_svg(&curves, &["dqn".into(), "din".into()], "t", "x", "y").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"legend-entry\"").count(), 2);
        assert!(svg.contains("stroke=\"#000000\""));
        assert!(svg.contains("stroke=\"#1f3fff\""));
    }

    #[test]
    fn axis_ranges_cover_the_data() {
        let curves = [curve(&[(100, -3.5), (200, 7.25)]), curve(&[(50, 0.0), (400, 1.0)])];
        let svg = render_svg(&curves, &["a".into(), "b".into()], "t", "x", "y").unwrap();
        assert!(attr(&svg, "data-x-min") <= 50.0 && attr(&svg, "data-x-max") >= 400.0);
        assert!(attr(&svg, "data-y-min") <= -3.5 && attr(&svg, "data-y-max") >= 7.25);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_svg(&[], &[], "t", "x", "y").is_err());
        assert!(render_svg(&[curve(&[(0, 1.0)])], &[], "t", "x", "y").is_err());
    }

    #[test]
    fn colors_follow_agent_convention() {
        assert_eq!(agent_color("ddqn", 0), "#800080");
        assert_eq!(agent_color("sql-0.5", 3), "#ff8c00");
        assert_eq!(agent_color("DQN", 1), "#000000");
    }

    #[test]
    fn titles_are_escaped() {
        let svg = render_svg(&[curve(&[(0, 1.0)])], &["a<b".into()], "x & y", "x", "y").unwrap();
        assert!(svg.contains("x &amp; y") && svg.contains("a&lt;b"));
    }
}
