//! Static SVG line charts of accuracy, paranoia and leakage against one
//! swept variable, averaged over the other axes.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::output::SummaryRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptVariable {
    NumSecrets,
    ContextRatio,
    SecretQuestionRatio,
}

impl SweptVariable {
    pub const ALL: [SweptVariable; 3] = [
        SweptVariable::NumSecrets,
        SweptVariable::ContextRatio,
        SweptVariable::SecretQuestionRatio,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SweptVariable::NumSecrets => "num_secrets",
            SweptVariable::ContextRatio => "context_ratio",
            SweptVariable::SecretQuestionRatio => "secret_question_ratio",
        }
    }

    fn of(self, r: &SummaryRow) -> f64 {
        match self {
            SweptVariable::NumSecrets => r.num_secrets as f64,
            SweptVariable::ContextRatio => r.context_ratio,
            SweptVariable::SecretQuestionRatio => r.secret_question_ratio,
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const METRICS: [(&str, &str); 3] = [("accuracy", "#1f77b4"), ("paranoia", "#d62728"), ("leakage", "#2ca02c")];
const DASHES: [&str; 4] = ["", "6 3", "2 3", "8 3 2 3"];

fn metric(r: &SummaryRow, name: &str) -> f64 {
    match name {
        "accuracy" => r.accuracy,
        "paranoia" => r.paranoia,
        _ => r.leakage,
    }
}

/// Returns `None` when the variable takes fewer than two distinct values.
pub fn render_chart(rows: &[SummaryRow], var: SweptVariable) -> Option<String> {
    let mut xs: Vec<f64> = rows.iter().map(|r| var.of(r)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return None;
    }
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - y.clamp(0.0, 1.0) * (H - TOP - BOTTOM);

    // design -> x -> (sums per metric, count)
    let mut groups: BTreeMap<&str, BTreeMap<usize, ([f64; 3], usize)>> = BTreeMap::new();
    for r in rows {
        let xi = xs.iter().position(|&x| x == var.of(r)).expect("x collected above");
        let slot = groups.entry(&r.design).or_default().entry(xi).or_insert(([0.0; 3], 0));
        for (k, (name, _)) in METRICS.iter().enumerate() {
            slot.0[k] += metric(r, name);
        }
        slot.1 += 1;
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Outcomes by {}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        var.key()
    );
    let (ax0, ax1, ay0, ay1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(svg, r#"<path d="M{ax0} {ay0} L{ax0} {ay1} L{ax1} {ay1}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let y = f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{ax0}" y1="{py:.1}" x2="{ax1}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"##,
            ax0 - 6.0,
            py(y) + 4.0,
            py = py(y),
        );
    }
    for &x in &xs {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
            px(x),
            ay1 + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (ax0 + ax1) / 2.0,
        H - 12.0,
        var.key()
    );

    let mut legend_y = TOP;
    for (d, (design, points)) in groups.iter().enumerate() {
        let dash = DASHES[d % DASHES.len()];
        for (k, (name, color)) in METRICS.iter().enumerate() {
            let path: Vec<String> = points
                .iter()
                .enumerate()
                .map(|(i, (&xi, (sums, n)))| {
                    let cmd = if i == 0 { 'M' } else { 'L' };
                    format!("{cmd}{:.1} {:.1}", px(xs[xi]), py(sums[k] / *n as f64))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<path d="{}" stroke="{color}" stroke-dasharray="{dash}" stroke-width="2" fill="none"/>"#,
                path.join(" ")
            );
            let lx = W - RIGHT + 15.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{color}" stroke-dasharray="{dash}" stroke-width="2"/><text x="{}" y="{}">{design} {name}</text>"#,
                lx + 24.0,
                lx + 30.0,
                legend_y + 4.0
            );
            legend_y += 16.0;
        }
    }
    svg.push_str("</svg>\n");
    Some(svg)
}
