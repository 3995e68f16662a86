use std::fmt::Write;

use offset_core::experiments::RateReport;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn px(&self, lx: f64) -> f64 {
        LEFT + (lx - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, ly: f64) -> f64 {
        HEIGHT - BOTTOM - (ly - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Log-log scatter of mean excess risk against `n` per estimator, with the
/// fitted lines and their slopes. Static markup only.
pub fn rate_plot(title: &str, reports: &[RateReport]) -> String {
    let points: Vec<Vec<(f64, f64)>> = reports
        .iter()
        .map(|r| {
            r.rows
                .iter()
                .filter(|row| row.mean_excess_risk > 0.0)
                .map(|row| ((row.n as f64).ln(), row.mean_excess_risk.ln()))
                .collect()
        })
        .collect();
    let all: Vec<(f64, f64)> = points.iter().flatten().copied().collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
    if all.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="{}">no positive means to plot</text>"#,
            HEIGHT / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }
    let fold = |f: fn(&(f64, f64)) -> f64| {
        all.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    };
    let (xl, xh) = fold(|p| p.0);
    let (yl, yh) = fold(|p| p.1);
    let axes = Axes {
        x: padded(xl, xh),
        y: padded(yl, yh),
    };
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    // x ticks at powers of two, y ticks at powers of ten
    let (e_lo, e_hi) = (
        (axes.x.0 / 2f64.ln()).ceil() as i64,
        (axes.x.1 / 2f64.ln()).floor() as i64,
    );
    for e in e_lo..=e_hi {
        let px = axes.px(e as f64 * 2f64.ln());
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">2^{e}</text>"#,
            y0 + 5.0,
            y0 + 20.0
        );
    }
    let (d_lo, d_hi) = (
        (axes.y.0 / 10f64.ln()).ceil() as i64,
        (axes.y.1 / 10f64.ln()).floor() as i64,
    );
    for e in d_lo..=d_hi {
        let py = axes.py(e as f64 * 10f64.ln());
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">sample size n (log scale)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">mean excess risk (log scale)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, (report, pts)) in reports.iter().zip(&points).enumerate() {
        let color = COLORS[i % COLORS.len()];
        for &(lx, ly) in pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                axes.px(lx),
                axes.py(ly)
            );
        }
        let fitted = report.slope.is_finite() && report.intercept.is_finite();
        if fitted {
            let line: Vec<String> = [axes.x.0, axes.x.1]
                .iter()
                .map(|&lx| {
                    let ly = (report.intercept + report.slope * lx).clamp(axes.y.0, axes.y.1);
                    format!("{:.2},{:.2}", axes.px(lx), axes.py(ly))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        let label = if fitted {
            format!(
                "{}: slope {:.3}, r2 {:.3}",
                report.estimator, report.slope, report.r_squared
            )
        } else {
            format!("{}: no fit", report.estimator)
        };
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            x1 + 12.0,
            ly - 10.0,
            x1 + 30.0,
            ly,
            escape(&label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
