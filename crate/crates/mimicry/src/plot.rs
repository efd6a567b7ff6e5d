//! Hand-rolled SVG: forest plot, dose-response and the (Λ, Δ) boundary.
//! Output depends only on the numbers passed in, formatted to fixed precision.

use std::fmt::Write as _;

use crate::report::{DoseJson, Results, SensitivityJson};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Two decimals, never `-0.00`.
fn f(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

/// Tick values covering [lo, hi] at a 1-2-5 step.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Axis {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px0: f64, px1: f64) -> Self {
        let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let pad = (hi - lo) * 0.05;
        Self { lo: lo - pad, hi: hi + pad, px0, px1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.px0 + (v.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo) * (self.px1 - self.px0)
    }
}

fn header(w: u32, h: u32, title: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2, escape(title)).unwrap();
    s
}

fn x_axis(s: &mut String, ax: &Axis, y: f64, label: &str) {
    writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, f(ax.px0), f(y), f(ax.px1), f(y)).unwrap();
    for t in ticks(ax.lo, ax.hi, 5) {
        let x = ax.at(t);
        writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, f(x), f(y), f(x), f(y + 4.0)).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, f(x), f(y + 16.0), tick_label(t)).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, f((ax.px0 + ax.px1) / 2.0), f(y + 32.0), escape(label)).unwrap();
}

fn y_axis(s: &mut String, ax: &Axis, x: f64, label: &str) {
    writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, f(x), f(ax.px0), f(x), f(ax.px1)).unwrap();
    for t in ticks(ax.lo, ax.hi, 5) {
        let y = ax.at(t);
        writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, f(x - 4.0), f(y), f(x), f(y)).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, f(x - 6.0), f(y + 4.0), tick_label(t)).unwrap();
    }
    let mid = (ax.px0 + ax.px1) / 2.0;
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#, f(x - 44.0), f(mid), f(x - 44.0), f(mid), escape(label)).unwrap();
}

fn vline(s: &mut String, x: f64, y0: f64, y1: f64) {
    writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="4 3"/>"##, f(x), f(y0), f(x), f(y1)).unwrap();
}

/// One forest-plot row.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestRow {
    pub label: String,
    pub rd: f64,
    pub rd_ci: [f64; 2],
    pub rr: Option<f64>,
    pub rr_ci: Option<[f64; 2]>,
    /// Randomized-partner estimate and interval.
    pub baseline: Option<(f64, [f64; 2])>,
}

pub fn forest_rows(results: &Results) -> Vec<ForestRow> {
    results
        .items
        .iter()
        .filter_map(|it| {
            let e = it.estimate.as_ref()?;
            let baseline = results
                .baseline
                .as_ref()
                .and_then(|b| b.items.iter().find(|x| x.item == it.item))
                .and_then(|x| x.estimate.as_ref())
                .map(|b| (b.rd, b.rd_ci));
            Some(ForestRow { label: it.item.clone(), rd: e.rd, rd_ci: e.rd_ci, rr: e.rr, rr_ci: e.rr_ci, baseline })
        })
        .collect()
}

/// RD panel with baseline overlay, and an RR panel for rows where RR is defined.
pub fn forest_svg(rows: &[ForestRow]) -> Option<String> {
    if rows.is_empty() {
        return None;
    }
    let row_h = 26.0;
    let top = 50.0;
    let plot_h = row_h * rows.len() as f64;
    let omitted = rows.iter().filter(|r| r.rr.is_none()).count();
    let height = (top + plot_h + 60.0 + if omitted > 0 { 18.0 } else { 0.0 }) as u32;
    let mut s = header(760, height, "Risk difference and risk ratio by item");

    let rd_vals = rows.iter().flat_map(|r| {
        let b = r.baseline.map(|(_, c)| c).unwrap_or(r.rd_ci);
        [r.rd_ci[0], r.rd_ci[1], b[0], b[1], 0.0]
    });
    let (lo, hi) = rd_vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let rd_ax = Axis::new(lo, hi, 150.0, 440.0);
    let rr_rows: Vec<&ForestRow> = rows.iter().filter(|r| r.rr.is_some()).collect();
    let rr_vals = rr_rows.iter().flat_map(|r| {
        let c = r.rr_ci.unwrap_or([r.rr.unwrap(); 2]);
        [c[0], c[1], 1.0]
    });
    let (rlo, rhi) = rr_vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let rr_ax = Axis::new(if rlo.is_finite() { rlo } else { 0.5 }, if rhi.is_finite() { rhi } else { 1.5 }, 490.0, 740.0);

    vline(&mut s, rd_ax.at(0.0), top - 6.0, top + plot_h);
    if !rr_rows.is_empty() {
        vline(&mut s, rr_ax.at(1.0), top - 6.0, top + plot_h);
    }
    for (i, r) in rows.iter().enumerate() {
        let y = top + row_h * (i as f64 + 0.5);
        writeln!(s, r#"<text x="140" y="{}" text-anchor="end">{}</text>"#, f(y + 4.0), escape(&r.label)).unwrap();
        writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#1f77b4" stroke-width="2"/>"##, f(rd_ax.at(r.rd_ci[0])), f(y), f(rd_ax.at(r.rd_ci[1])), f(y)).unwrap();
        writeln!(s, r##"<circle cx="{}" cy="{}" r="4" fill="#1f77b4"/>"##, f(rd_ax.at(r.rd)), f(y)).unwrap();
        if let Some((b, c)) = r.baseline {
            let yb = y + 7.0;
            writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888"/>"##, f(rd_ax.at(c[0])), f(yb), f(rd_ax.at(c[1])), f(yb)).unwrap();
            writeln!(s, r##"<circle cx="{}" cy="{}" r="3" fill="white" stroke="#888"/>"##, f(rd_ax.at(b)), f(yb)).unwrap();
        }
        if let Some(rr) = r.rr {
            if let Some(c) = r.rr_ci {
                writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-width="2"/>"##, f(rr_ax.at(c[0])), f(y), f(rr_ax.at(c[1])), f(y)).unwrap();
            }
            writeln!(s, r##"<circle cx="{}" cy="{}" r="4" fill="#d62728"/>"##, f(rr_ax.at(rr)), f(y)).unwrap();
        }
    }
    let axis_y = top + plot_h + 6.0;
    x_axis(&mut s, &rd_ax, axis_y, "risk difference (open: randomized partners)");
    if !rr_rows.is_empty() {
        x_axis(&mut s, &rr_ax, axis_y, "risk ratio");
    }
    if omitted > 0 {
        writeln!(s, r#"<text x="490" y="{}">RR undefined for {omitted} row(s), omitted</text>"#, f(axis_y + 50.0)).unwrap();
    }
    s.push_str("</svg>\n");
    Some(s)
}

pub fn dose_svg(dose: &DoseJson) -> Option<String> {
    let DoseJson::Ok { bins, slope_rd, intercept_rd, p_rd, .. } = dose else { return None };
    if bins.is_empty() {
        return None;
    }
    let mut s = header(560, 380, "Effect by queue delay");
    let x_hi = bins.iter().map(|b| b.hi_s).max().unwrap_or(300) as f64;
    let x_ax = Axis::new(0.0, x_hi, 80.0, 530.0);
    let fit = |x: f64| intercept_rd + slope_rd * x;
    let ys = bins.iter().flat_map(|b| [b.estimate.rd_ci[0], b.estimate.rd_ci[1]]).chain([0.0, fit(0.0), fit(x_hi)]);
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let y_ax = Axis::new(lo, hi, 320.0, 40.0);
    let zero = y_ax.at(0.0);
    writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#888" stroke-dasharray="4 3"/>"##, f(x_ax.px0), f(zero), f(x_ax.px1), f(zero)).unwrap();
    for b in bins {
        let x = x_ax.at(b.midpoint_s);
        let e = &b.estimate;
        writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#1f77b4"/>"##, f(x), f(y_ax.at(e.rd_ci[0])), f(x), f(y_ax.at(e.rd_ci[1]))).unwrap();
        writeln!(s, r##"<circle cx="{}" cy="{}" r="4" fill="#1f77b4"/>"##, f(x), f(y_ax.at(e.rd))).unwrap();
    }
    writeln!(s, r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-width="2"/>"##, f(x_ax.at(0.0)), f(y_ax.at(fit(0.0))), f(x_ax.at(x_hi)), f(y_ax.at(fit(x_hi)))).unwrap();
    writeln!(s, r#"<text x="520" y="56" text-anchor="end">slope {:.2e} per s, p = {:.2e}</text>"#, slope_rd, p_rd).unwrap();
    x_axis(&mut s, &x_ax, 326.0, "delay between partner and focal (s)");
    y_axis(&mut s, &y_ax, 74.0, "risk difference");
    s.push_str("</svg>\n");
    Some(s)
}

/// (Λ, Δ) curves of every item with a significant effect.
pub fn sensitivity_svg(rows: &[SensitivityJson]) -> Option<String> {
    let curves: Vec<&SensitivityJson> = rows.iter().filter(|r| !r.curve.is_empty()).collect();
    if curves.is_empty() {
        return None;
    }
    let lam_hi = curves.iter().flat_map(|r| r.curve.iter().map(|p| p[0])).fold(1.0, f64::max);
    let g_hi = curves.iter().filter_map(|r| r.gamma_star).fold(1.0, f64::max);
    let delta_hi = (4.0 * g_hi).min(curves.iter().flat_map(|r| r.curve.iter().map(|p| p[1])).fold(1.0, f64::max));
    let mut s = header(560, 400, "Sensitivity: confounder strengths that explain away the effect");
    let x_ax = Axis::new(1.0, lam_hi, 80.0, 400.0);
    let y_ax = Axis::new(1.0, delta_hi, 340.0, 40.0);
    for (i, r) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = r
            .curve
            .iter()
            .filter(|p| p[1] <= y_ax.hi)
            .map(|p| format!("{},{}", f(x_ax.at(p[0])), f(y_ax.at(p[1]))))
            .collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        let ly = 50.0 + 16.0 * i as f64;
        writeln!(s, r#"<line x1="420" y1="{}" x2="440" y2="{}" stroke="{color}" stroke-width="2"/>"#, f(ly), f(ly)).unwrap();
        let g = r.gamma_star.map(f).unwrap_or_default();
        writeln!(s, r#"<text x="446" y="{}">{} (Γ* {g})</text>"#, f(ly + 4.0), escape(&r.item)).unwrap();
    }
    x_axis(&mut s, &x_ax, 346.0, "Λ (confounder effect on treatment)");
    y_axis(&mut s, &y_ax, 74.0, "Δ (confounder effect on outcome)");
    s.push_str("</svg>\n");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(-0.013, 0.013, 5).first().copied(), Some(-0.01));
        assert_eq!(f(-0.0001), "0.00");
        assert_eq!(tick_label(0.5), "0.5");
        assert_eq!(tick_label(-0.0), "0");
    }

    #[test]
    fn single_row_forest() {
        let row = ForestRow { label: "dessert".into(), rd: 0.1, rd_ci: [0.05, 0.15], rr: Some(1.5), rr_ci: Some([1.2, 1.8]), baseline: None };
        let svg = forest_svg(&[row]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(!svg.contains("omitted"));
        assert!(forest_svg(&[]).is_none());
    }

    #[test]
    fn undefined_rr_rows_are_noted() {
        let a = ForestRow { label: "a".into(), rd: 0.1, rd_ci: [0.0, 0.2], rr: None, rr_ci: None, baseline: None };
        let b = ForestRow { label: "b".into(), rd: 0.1, rd_ci: [0.0, 0.2], rr: Some(2.0), rr_ci: None, baseline: Some((0.0, [-0.1, 0.1])) };
        let svg = forest_svg(&[a, b]).unwrap();
        assert!(svg.contains("RR undefined for 1 row(s)"));
    }
}
