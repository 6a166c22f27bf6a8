//! Minimal SVG line plots of a run: bus voltage with band lines, branch
//! currents with their share targets, and the Lyapunov value on a log axis.
//!
//! Hand-rolled on purpose: three static polyline charts do not justify a
//! plotting dependency. Output is deterministic for identical inputs.

use crate::analysis;
use crate::engine::Scenario;
use crate::trace::TraceRecord;
use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 46.0;
const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Cap on polyline vertices per series; longer traces are decimated evenly.
const MAX_POINTS: usize = 2000;

struct Frame {
    t0: f64,
    t1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        MARGIN_L + (t - self.t0) / (self.t1 - self.t0).max(1e-300) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-300);
        HEIGHT - MARGIN_B - (v - self.y0) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn decimate(records: &[TraceRecord]) -> Vec<&TraceRecord> {
    if records.len() <= MAX_POINTS {
        return records.iter().collect();
    }
    let stride = records.len().div_ceil(MAX_POINTS);
    let mut out: Vec<&TraceRecord> = records.iter().step_by(stride).collect();
    if let Some(last) = records.last() {
        if !std::ptr::eq(*out.last().unwrap(), last) {
            out.push(last);
        }
    }
    out
}

fn svg_open(title: &str) -> String {
    let mut s = String::with_capacity(64 * 1024);
    let _ = write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{x}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        x = WIDTH / 2.0
    );
    s
}

fn axes(s: &mut String, frame: &Frame, x_label: &str, y_label: &str, log_y: bool) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let yb = HEIGHT - MARGIN_B;
    let _ = write!(
        s,
        "<line x1=\"{x0}\" y1=\"{yb}\" x2=\"{x1}\" y2=\"{yb}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{MARGIN_T}\" x2=\"{x0}\" y2=\"{yb}\" stroke=\"black\"/>\n"
    );
    for k in 0..=5 {
        let t = frame.t0 + (frame.t1 - frame.t0) * k as f64 / 5.0;
        let x = frame.x(t);
        let _ = write!(
            s,
            "<line x1=\"{x}\" y1=\"{yb}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{t:.2}</text>\n",
            yb + 5.0,
            yb + 20.0
        );
        let v = frame.y0 + (frame.y1 - frame.y0) * k as f64 / 5.0;
        let y = frame.y(v);
        let label = if log_y {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        };
        let _ = write!(
            s,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{x0}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = write!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 10.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
}

fn polyline(s: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, dash: Option<&str>) {
    if points.is_empty() {
        return;
    }
    let dash = dash
        .map(|d| format!(" stroke-dasharray=\"{d}\""))
        .unwrap_or_default();
    let _ = write!(
        s,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"{dash} points=\""
    );
    for (t, v) in points {
        let _ = write!(s, "{:.2},{:.2} ", frame.x(*t), frame.y(*v));
    }
    let _ = writeln!(s, "\"/>");
}

fn hline(s: &mut String, frame: &Frame, v: f64, color: &str, label: &str) {
    let y = frame.y(v);
    let _ = write!(
        s,
        "<line x1=\"{MARGIN_L}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-dasharray=\"6 4\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"end\" fill=\"{color}\">{label}</text>\n",
        WIDTH - MARGIN_R,
        WIDTH - MARGIN_R - 4.0,
        y - 4.0
    );
}

/// Bus voltage with the band edges and the setpoint(s).
pub fn voltage_svg(records: &[TraceRecord], scenario: &Scenario) -> String {
    let pts = decimate(records);
    let spec = scenario.barrier;
    let pad = 0.05 * spec.span();
    let frame = Frame {
        t0: 0.0,
        t1: scenario.t_end,
        y0: spec.v_min() - pad,
        y1: spec.v_max() + pad,
    };
    let mut s = svg_open("Bus voltage");
    axes(&mut s, &frame, "time (s)", "V_o (V)", false);
    hline(&mut s, &frame, spec.v_min(), "#d62728", "v_min");
    hline(&mut s, &frame, spec.v_max(), "#d62728", "v_max");
    hline(&mut s, &frame, scenario.v_star, "#7f7f7f", "setpoint");
    let series: Vec<(f64, f64)> = pts.iter().map(|r| (r.t, r.v_o)).collect();
    polyline(&mut s, &frame, &series, SERIES_COLORS[0], None);
    s.push_str("</svg>\n");
    s
}

/// Branch currents with the per-segment share targets overlaid.
pub fn currents_svg(records: &[TraceRecord], scenario: &Scenario) -> String {
    let pts = decimate(records);
    let n = scenario.n();
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for r in &pts {
        for &i in &r.i_t {
            lo = lo.min(i);
            hi = hi.max(i);
        }
    }
    let segs = analysis::segments(scenario);
    let mut targets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n];
    for seg in &segs {
        let eq =
            crate::plant::equilibrium(&scenario.dgus, seg.load, seg.v_star, &scenario.gains.ratios);
        for (target, &level) in targets.iter_mut().zip(&eq.i_t_star) {
            target.push((seg.start, level));
            target.push((seg.end, level));
            lo = lo.min(level);
            hi = hi.max(level);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = 0.08 * (hi - lo).max(1.0);
    let frame = Frame {
        t0: 0.0,
        t1: scenario.t_end,
        y0: lo - pad,
        y1: hi + pad,
    };
    let mut s = svg_open("Branch currents and share targets");
    axes(&mut s, &frame, "time (s)", "I_t (A)", false);
    for j in 0..n {
        let color = SERIES_COLORS[j % SERIES_COLORS.len()];
        let series: Vec<(f64, f64)> = pts.iter().map(|r| (r.t, r.i_t[j])).collect();
        polyline(&mut s, &frame, &series, color, None);
        polyline(&mut s, &frame, &targets[j], color, Some("3 5"));
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">I_t{}</text>",
            WIDTH - MARGIN_R - 50.0,
            MARGIN_T + 16.0 * (j + 1) as f64,
            j + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Lyapunov value on a log10 axis. Non-positive samples (possible only at
/// exact zero) are clipped to the axis floor.
pub fn lyapunov_svg(records: &[TraceRecord], scenario: &Scenario) -> String {
    let pts = decimate(records);
    let logs: Vec<(f64, f64)> = pts
        .iter()
        .filter(|r| r.lyapunov.is_finite())
        .map(|r| (r.t, r.lyapunov.max(1e-12).log10()))
        .collect();
    let lo = logs.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let hi = logs.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let (lo, hi) = if logs.is_empty() {
        (0.0, 1.0)
    } else {
        (lo - 0.2, hi + 0.2)
    };
    let frame = Frame {
        t0: 0.0,
        t1: scenario.t_end,
        y0: lo,
        y1: hi,
    };
    let mut s = svg_open("Lyapunov function (log scale)");
    axes(&mut s, &frame, "time (s)", "log10 W", true);
    polyline(&mut s, &frame, &logs, SERIES_COLORS[3], None);
    s.push_str("</svg>\n");
    s
}
