use std::fmt::Write as _;
use std::path::Path;

use super::report::{EvalReport, EvalRow};
use super::Method;
use crate::error::Result;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn dash(method: Method) -> &'static str {
    match method {
        Method::Bfnn => "",
        Method::EgtOnEstimate => " stroke-dasharray=\"6 4\"",
        Method::PerfectBound => " stroke-dasharray=\"2 3\"",
    }
}

fn marker(method: Method, x: f64, y: f64, color: &str) -> String {
    match method {
        Method::Bfnn => format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>"),
        Method::EgtOnEstimate => {
            format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"6\" height=\"6\" fill=\"{color}\"/>",
                x - 3.0,
                y - 3.0
            )
        }
        Method::PerfectBound => String::new(),
    }
}

fn pnr_label(pnr: f64) -> String {
    if pnr.is_infinite() {
        "inf".into()
    } else {
        format!("{pnr}")
    }
}

/// Step that gives roughly five to ten ticks over `span`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// SE-versus-SNR chart with one series per (method, PNR, L_est).
pub fn render_svg(report: &EvalReport) -> String {
    let mut series: Vec<(Method, f64, usize, Vec<&EvalRow>)> = Vec::new();
    for r in &report.rows {
        match series
            .iter_mut()
            .find(|s| s.0 == r.method && s.1 == r.pnr_db && s.2 == r.l_est)
        {
            Some(s) => s.3.push(r),
            None => series.push((r.method, r.pnr_db, r.l_est, vec![r])),
        }
    }
    for s in &mut series {
        s.3.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    }

    let (mut x0, mut x1) = report
        .rows
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), r| {
            (lo.min(r.snr_db), hi.max(r.snr_db))
        });
    if report.rows.is_empty() {
        (x0, x1) = (-20.0, 20.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let y1 = report.rows.iter().map(|r| r.mean_se).fold(1.0f64, f64::max) * 1.05;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - y / y1 * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );

    let xs = tick_step(x1 - x0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 + 1e-9 {
        let x = px(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{TOP}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#e0e0e0\"/>",
            TOP + ph
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{t}</text>",
            TOP + ph + 18.0
        );
        t += xs;
    }
    let ys = tick_step(y1);
    let mut t = 0.0;
    while t <= y1 + 1e-9 {
        let y = py(t);
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#e0e0e0\"/>",
            LEFT + pw
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{t}</text>",
            LEFT - 6.0,
            y + 4.0
        );
        t += ys;
    }
    let _ = writeln!(svg, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">SNR (dB)</text>",
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">Spectral efficiency (bits/s/Hz)</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let mut conditions: Vec<(f64, usize)> = Vec::new();
    for s in &series {
        if !conditions.contains(&(s.1, s.2)) {
            conditions.push((s.1, s.2));
        }
    }
    for (i, (method, pnr, l_est, rows)) in series.iter().enumerate() {
        let ci = conditions
            .iter()
            .position(|c| *c == (*pnr, *l_est))
            .unwrap_or(0);
        let color = COLORS[ci % COLORS.len()];
        let pts: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.snr_db), py(r.mean_se)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"{}/>",
            pts.join(" "),
            dash(*method)
        );
        for r in rows {
            svg.push_str(&marker(*method, px(r.snr_db), py(r.mean_se), color));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 15.0;
        let _ = writeln!(
            svg,
            "\n<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.6\"{}/>",
            lx + 28.0,
            dash(*method)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">{method}, PNR {} dB, L_est {l_est}</text>",
            lx + 34.0,
            ly + 4.0,
            pnr_label(*pnr)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_plot(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_svg(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{ReportMeta, SweepSpec};

    fn two_rows() -> EvalReport {
        let row = |snr_db, mean_se| EvalRow {
            method: Method::Bfnn,
            snr_db,
            pnr_db: f64::INFINITY,
            l_est: 3,
            mean_se,
            std_se: 0.1,
            n_samples: 10,
            seed: 1,
        };
        EvalReport {
            rows: vec![row(0.0, 1.0), row(10.0, 3.0)],
            meta: ReportMeta {
                dataset_hash: String::new(),
                model_hashes: vec![],
                spec: SweepSpec::default(),
            },
        }
    }

    #[test]
    fn svg_is_well_formed() {
        let svg = render_svg(&two_rows());
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert_eq!(
            doc.descendants()
                .filter(|n| n.has_tag_name("polyline"))
                .count(),
            1
        );
    }

    #[test]
    fn empty_report_still_renders() {
        let mut r = two_rows();
        r.rows.clear();
        roxmltree::Document::parse(&render_svg(&r)).unwrap();
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(tick_step(40.0), 10.0);
        assert_eq!(tick_step(12.0), 2.0);
    }
}
