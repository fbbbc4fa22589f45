//! Minimal hand-written SVG charts.

use std::fmt::Write as _;

use forestcurve_core::crowd::{Class, HorRecord, SegmentLabel};
use forestcurve_core::curriculum::{LearningCurve, StrategyKind};

const W: f64 = 710.0;
const H: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

/// Linear map from data ranges onto the plot rectangle.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str, ticks: usize) {
        let (x0, x1, y0, y1) = (
            self.px(self.x.0),
            self.px(self.x.1),
            self.py(self.y.0),
            self.py(self.y.1),
        );
        let _ = writeln!(
            out,
            r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            x1 - x0,
            y0 - y1
        );
        for i in 0..=ticks {
            let t = i as f64 / ticks as f64;
            let (vx, vy) = (
                self.x.0 + t * (self.x.1 - self.x.0),
                self.y.0 + t * (self.y.1 - self.y.0),
            );
            let (gx, gy) = (self.px(vx), self.py(vy));
            let _ = writeln!(
                out,
                "<line x1=\"{gx:.1}\" y1=\"{y0}\" x2=\"{gx:.1}\" y2=\"{y1}\" stroke=\"#ddd\"/>\n\
                 <text x=\"{gx:.1}\" y=\"{}\" text-anchor=\"middle\">{vx:.2}</text>\n\
                 <line x1=\"{x0}\" y1=\"{gy:.1}\" x2=\"{x1}\" y2=\"{gy:.1}\" stroke=\"#ddd\"/>\n\
                 <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{vy:.2}</text>",
                y0 + 16.0,
                x0 - 6.0,
                gy + 4.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-weight=\"bold\">{title}</text>\n\
             <text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{xlabel}</text>\n\
             <text transform=\"translate(16 {:.1}) rotate(-90)\" text-anchor=\"middle\">{ylabel}</text>",
            (x0 + x1) / 2.0,
            (x0 + x1) / 2.0,
            H - 12.0,
            (y0 + y1) / 2.0
        );
    }
}

fn open(header: &str) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!-- {header} -->\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    )
}

fn legend(out: &mut String, row: usize, colour: &str, text: &str) {
    let x = W - RIGHT + 14.0;
    let y = TOP + 10.0 + 18.0 * row as f64;
    let _ = writeln!(
        out,
        "<rect x=\"{x}\" y=\"{}\" width=\"14\" height=\"8\" fill=\"{colour}\"/>\
         <text x=\"{}\" y=\"{y}\">{text}</text>",
        y - 8.0,
        x + 20.0
    );
}

/// Crowd entropy of each campaign segment against its HoR, coloured by the
/// ground-truth class.
pub fn hor_entropy(hors: &[HorRecord], labels: &[SegmentLabel], header: &str) -> String {
    let frame = Frame {
        x: (0.5, 1.0),
        y: (0.0, 1.0),
    };
    let mut out = open(header);
    frame.axes(&mut out, "Crowd entropy vs HoR", "HoR", "entropy (bits)", 5);
    for label in labels {
        let (Some(e), Ok(i)) = (
            label.entropy,
            hors.binary_search_by_key(&label.segment_id, |r| r.segment_id),
        ) else {
            continue;
        };
        let colour = class_colour(hors[i].majority());
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{colour}\" fill-opacity=\"0.7\"/>",
            frame.px(hors[i].hor),
            frame.py(e)
        );
    }
    legend(&mut out, 0, class_colour(Class::Forest), "forest");
    legend(&mut out, 1, class_colour(Class::NonForest), "non-forest");
    out.push_str("</svg>\n");
    out
}

fn class_colour(class: Class) -> &'static str {
    match class {
        Class::Forest => "#1b7837",
        Class::NonForest => "#b35806",
    }
}

fn strategy_colour(kind: StrategyKind) -> &'static str {
    match kind {
        StrategyKind::Increasing => "#1f77b4",
        StrategyKind::Decreasing => "#d62728",
        StrategyKind::Edges => "#9467bd",
        StrategyKind::Random => "#7f7f7f",
    }
}

/// Balanced accuracy against training fraction. Multi-repetition curves are
/// drawn as a mean line inside a one-standard-deviation band.
pub fn learning_curves(curves: &[LearningCurve], header: &str) -> String {
    let values: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter())
        .filter_map(|p| p.balanced_accuracy().map(|m| (m, p.std())))
        .flat_map(|(m, s)| [m - s, m + s])
        .collect();
    let lo = values.iter().copied().fold(1.0_f64, f64::min);
    let floor = ((lo * 10.0).floor() / 10.0).clamp(0.0, 0.9);
    let frame = Frame {
        x: (0.0, 1.0),
        y: (floor, 1.0),
    };
    let mut out = open(header);
    frame.axes(
        &mut out,
        "Learning curves",
        "training fraction",
        "balanced accuracy",
        5,
    );

    for (row, curve) in curves.iter().enumerate() {
        let colour = strategy_colour(curve.strategy.kind);
        let points: Vec<(f64, f64, f64)> = curve
            .points
            .iter()
            .filter_map(|p| {
                p.balanced_accuracy()
                    .map(|m| (p.fraction.value(), m, p.std()))
            })
            .collect();
        if curve.strategy.repetitions > 1 && !points.is_empty() {
            let upper = points.iter().map(|&(f, m, s)| (f, (m + s).min(1.0)));
            let lower = points
                .iter()
                .rev()
                .map(|&(f, m, s)| (f, (m - s).max(frame.y.0)));
            let band: Vec<String> = upper
                .chain(lower)
                .map(|(f, v)| format!("{:.2},{:.2}", frame.px(f), frame.py(v)))
                .collect();
            let _ = writeln!(
                out,
                "<polygon points=\"{}\" fill=\"{colour}\" fill-opacity=\"0.2\" stroke=\"none\"/>",
                band.join(" ")
            );
        }
        let line: Vec<String> = points
            .iter()
            .map(|&(f, m, _)| format!("{:.2},{:.2}", frame.px(f), frame.py(m)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\"/>",
            line.join(" ")
        );
        let name = if curve.strategy.repetitions > 1 {
            format!("{} (mean ± sd)", curve.strategy.kind.as_str())
        } else {
            curve.strategy.kind.as_str().to_string()
        };
        legend(&mut out, row, colour, &name);
    }
    out.push_str("</svg>\n");
    out
}
