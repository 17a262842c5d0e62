//! Minimal SVG plot emission for profile curves and summary figures:
//! polyline plots with linear, log10 or log2 axes, vertical error
//! bars, and a sorted best-value listing. Output is a standalone SVG
//! document built deterministically from the input data.

use crate::profiles::ProfileCurve;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 46.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisScale {
    Linear,
    Log10,
    Log2,
}

impl AxisScale {
    fn forward(self, v: f64) -> f64 {
        match self {
            AxisScale::Linear => v,
            AxisScale::Log10 => v.log10(),
            AxisScale::Log2 => v.log2(),
        }
    }

    fn tick_label(self, t: f64) -> String {
        match self {
            AxisScale::Linear => trim_float(t),
            AxisScale::Log10 => format!("1e{}", t.round() as i64),
            AxisScale::Log2 => trim_float(2f64.powf(t)),
        }
    }
}

/// One plotted series: data points plus optional error bar half-widths.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub yerr: Vec<Option<f64>>,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Self {
        let n = points.len();
        Series {
            label: label.to_string(),
            points,
            yerr: vec![None; n],
        }
    }
}

/// A single-panel plot description.
#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: AxisScale,
    pub y_scale: AxisScale,
    pub series: Vec<Series>,
    /// When set, an extra rightmost x slot labelled this way receives
    /// points at x = +infinity (the RMP right endpoint).
    pub inf_slot_label: Option<String>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            x_scale: AxisScale::Linear,
            y_scale: AxisScale::Linear,
            series: Vec::new(),
            inf_slot_label: None,
        }
    }

    /// Renders the plot as a standalone SVG document.
    pub fn to_svg(&self) -> String {
        let mut svg = svg_open(WIDTH, HEIGHT);
        self.render_into(&mut svg, 0.0, 0.0);
        svg.push_str("</svg>\n");
        svg
    }

    fn transformed_extent(&self) -> Option<((f64, f64), (f64, f64))> {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if x.is_infinite() {
                    continue;
                }
                let tx = self.x_scale.forward(x);
                let ty = self.y_scale.forward(y);
                if tx.is_finite() && ty.is_finite() {
                    xs.push(tx);
                    let e = s.yerr.get(i).copied().flatten().unwrap_or(0.0);
                    ys.push(ty);
                    ys.push(self.y_scale.forward(y - e));
                    ys.push(self.y_scale.forward(y + e));
                }
            }
        }
        ys.retain(|v| v.is_finite());
        let min_max = |v: &[f64]| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        if xs.is_empty() || ys.is_empty() {
            return None;
        }
        let (mut xlo, mut xhi) = min_max(&xs);
        let (mut ylo, mut yhi) = min_max(&ys);
        if xhi - xlo < 1e-12 {
            xlo -= 0.5;
            xhi += 0.5;
        }
        if yhi - ylo < 1e-12 {
            ylo -= 0.5;
            yhi += 0.5;
        }
        Some(((xlo, xhi), (ylo, yhi)))
    }

    /// Renders the panel into `out` translated by (ox, oy); used both
    /// standalone and by the multi-panel grid.
    fn render_into(&self, out: &mut String, ox: f64, oy: f64) {
        let Some(((xlo, xhi), (ylo, yhi))) = self.transformed_extent() else {
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">no finite data</text>\n",
                ox + WIDTH / 2.0,
                oy + HEIGHT / 2.0
            ));
            return;
        };
        // Reserve one extra slot on the right for infinite x values.
        let inf_slot = self.inf_slot_label.is_some();
        let xspan = xhi - xlo;
        let xhi_draw = if inf_slot { xhi + 0.12 * xspan } else { xhi };

        let px = |tx: f64| {
            ox + MARGIN_L + (tx - xlo) / (xhi_draw - xlo) * (WIDTH - MARGIN_L - MARGIN_R)
        };
        let py = |ty: f64| {
            oy + HEIGHT - MARGIN_B - (ty - ylo) / (yhi - ylo) * (HEIGHT - MARGIN_T - MARGIN_B)
        };
        let x_of = |x: f64| {
            if x.is_infinite() {
                px(xhi_draw)
            } else {
                px(self.x_scale.forward(x))
            }
        };

        // Frame and title.
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\"/>\n",
            ox + MARGIN_L,
            oy + MARGIN_T,
            WIDTH - MARGIN_L - MARGIN_R,
            HEIGHT - MARGIN_T - MARGIN_B
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
            ox + WIDTH / 2.0,
            oy + MARGIN_T - 12.0,
            escape(&self.title)
        ));

        // Axis ticks: at most 8 per axis on round transformed values.
        for t in ticks(xlo, xhi, 8) {
            let x = px(t);
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#bbb\" stroke-width=\"0.5\"/>\n",
                oy + MARGIN_T,
                oy + HEIGHT - MARGIN_B
            ));
            out.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                oy + HEIGHT - MARGIN_B + 14.0,
                self.x_scale.tick_label(t)
            ));
        }
        if let Some(label) = &self.inf_slot_label {
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                px(xhi_draw),
                oy + HEIGHT - MARGIN_B + 14.0,
                escape(label)
            ));
        }
        for t in ticks(ylo, yhi, 8) {
            let y = py(t);
            out.push_str(&format!(
                "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#bbb\" stroke-width=\"0.5\"/>\n",
                ox + MARGIN_L,
                ox + WIDTH - MARGIN_R
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
                ox + MARGIN_L - 5.0,
                self.y_scale.tick_label(t)
            ));
        }

        // Axis labels.
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            ox + WIDTH / 2.0,
            oy + HEIGHT - 8.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1} {:.1})\">{}</text>\n",
            ox + 14.0,
            oy + HEIGHT / 2.0,
            ox + 14.0,
            oy + HEIGHT / 2.0,
            escape(&self.y_label)
        ));

        // Series: polyline, error bars, legend entry.
        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| {
                    (x.is_infinite() || self.x_scale.forward(*x).is_finite())
                        && self.y_scale.forward(*y).is_finite()
                })
                .map(|&(x, y)| format!("{:.2},{:.2}", x_of(x), py(self.y_scale.forward(y))))
                .collect();
            if !coords.is_empty() {
                out.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    coords.join(" ")
                ));
            }
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if let Some(e) = s.yerr.get(i).copied().flatten() {
                    let (lo, hi) = (self.y_scale.forward(y - e), self.y_scale.forward(y + e));
                    if lo.is_finite() && hi.is_finite() {
                        let xc = x_of(x);
                        out.push_str(&format!(
                            "<line class=\"errbar\" x1=\"{xc:.2}\" y1=\"{:.2}\" x2=\"{xc:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1\"/>\n",
                            py(lo),
                            py(hi)
                        ));
                    }
                }
            }
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"{color}\">{}</text>\n",
                ox + MARGIN_L + 8.0,
                oy + MARGIN_T + 14.0 + 13.0 * si as f64,
                escape(&s.label)
            ));
        }
    }
}

/// Lays several plots out on a fixed-column grid in one SVG document.
pub fn panel_grid(plots: &[Plot], cols: usize) -> String {
    assert!(cols >= 1);
    let rows = plots.len().div_ceil(cols);
    let mut svg = svg_open(WIDTH * cols as f64, HEIGHT * rows as f64);
    for (i, p) in plots.iter().enumerate() {
        let ox = (i % cols) as f64 * WIDTH;
        let oy = (i / cols) as f64 * HEIGHT;
        p.render_into(&mut svg, ox, oy);
    }
    svg.push_str("</svg>\n");
    svg
}

/// An RMP panel: log10 tolerance axis with the infinite right endpoint
/// drawn in a dedicated slot.
pub fn rmp_plot(curves: &[ProfileCurve], title: &str) -> Plot {
    let mut plot = Plot::new(title, "relative tolerance", "% of runs");
    plot.x_scale = AxisScale::Log10;
    plot.inf_slot_label = Some("inf".to_string());
    for c in curves {
        let mut s = Series::new(
            &c.label,
            c.points.iter().map(|p| (p.x, p.y)).collect(),
        );
        s.yerr = c.points.iter().map(|p| p.yerr).collect();
        plot.series.push(s);
    }
    plot
}

/// A GL panel: log2 axis over the number of starting points, error
/// bars from the per-point standard errors.
pub fn gl_plot(curves: &[ProfileCurve], title: &str, y_label: &str) -> Plot {
    let mut plot = Plot::new(title, "starting points per budget", y_label);
    plot.x_scale = AxisScale::Log2;
    for c in curves {
        let mut s = Series::new(
            &c.label,
            c.points.iter().map(|p| (p.x, p.y)).collect(),
        );
        s.yerr = c.points.iter().map(|p| p.yerr).collect();
        plot.series.push(s);
    }
    plot
}

/// Sorted best-value listing: per run the best feasible objective or
/// none. Infeasible runs are drawn first (as markers on a top band),
/// then feasible bests in decreasing order; the objective axis is
/// log10 when every value is positive, linear otherwise.
pub fn sorted_best_plot(bests: &[(String, Option<f64>)], title: &str) -> Plot {
    let mut feasible: Vec<f64> = bests.iter().filter_map(|(_, b)| *b).collect();
    feasible.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n_inf = bests.len() - feasible.len();

    let mut plot = Plot::new(title, "run (sorted)", "best feasible objective");
    if feasible.iter().all(|&v| v > 0.0) && !feasible.is_empty() {
        plot.y_scale = AxisScale::Log10;
    }
    let band = feasible
        .first()
        .copied()
        .unwrap_or(1.0);
    let mut points: Vec<(f64, f64)> = (0..n_inf).map(|i| (i as f64 + 1.0, band)).collect();
    let infeasible_series = Series::new("infeasible (at top band)", points.clone());
    points = feasible
        .iter()
        .enumerate()
        .map(|(i, &v)| ((n_inf + i) as f64 + 1.0, v))
        .collect();
    if !infeasible_series.points.is_empty() {
        plot.series.push(infeasible_series);
    }
    plot.series.push(Series::new("feasible best", points));
    plot
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn trim_float(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 && v.abs() < 1e12 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.3}")
    }
}

/// Round tick positions covering [lo, hi] with at most `max` entries.
fn ticks(lo: f64, hi: f64, max: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / max as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= max as f64)
        .unwrap_or(span);
    let first = (lo / step).ceil() * step;
    let mut out = Vec::new();
    let mut t = first;
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}
