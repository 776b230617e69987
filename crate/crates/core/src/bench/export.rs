use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::AggregateStats;

pub const CSV_HEADER: &str = "iteration,mean_errors,std_errors,mean_warnings,std_warnings";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
    Svg,
}

/// Fixed six decimals with trailing zeros trimmed.
fn decimal(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn render_csv(stats: &AggregateStats) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in &stats.iterations {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.iteration,
            decimal(s.mean_errors),
            decimal(s.std_errors),
            decimal(s.mean_warnings),
            decimal(s.std_warnings)
        );
    }
    out
}

pub fn render_json(stats: &AggregateStats) -> String {
    serde_json::to_string_pretty(stats).expect("stats serialize")
}

/// Bar chart of mean errors per iteration with one-standard-deviation
/// whiskers. `skip_initial` leaves out iteration 0.
pub fn render_svg(stats: &AggregateStats, skip_initial: bool) -> String {
    let shown: Vec<_> = stats
        .iterations
        .iter()
        .filter(|s| !(skip_initial && s.iteration == 0))
        .collect();
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let base_y = MARGIN_TOP + plot_h;
    let top = shown.iter().map(|s| s.mean_errors + s.std_errors).fold(0.0, f64::max);
    let scale = if top > 0.0 { plot_h / top } else { 0.0 };
    let slot = plot_w / shown.len().max(1) as f64;
    let bar_w = slot * 0.7;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{MARGIN_LEFT}" y1="{base_y}" x2="{}" y2="{base_y}" stroke="black"/>"#,
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{base_y}" stroke="black"/>"#
    );
    for (i, s) in shown.iter().enumerate() {
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let h = s.mean_errors * scale;
        let _ = writeln!(
            svg,
            r##"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0"><title>iteration {}: {}</title></rect>"##,
            cx - bar_w / 2.0,
            base_y - h,
            bar_w,
            h,
            s.iteration,
            decimal(s.mean_errors)
        );
        if s.std_errors > 0.0 {
            let lo = base_y - (s.mean_errors - s.std_errors).max(0.0) * scale;
            let hi = base_y - (s.mean_errors + s.std_errors) * scale;
            let cap = bar_w / 4.0;
            let _ = writeln!(
                svg,
                r#"<path class="whisker" d="M{cx:.2} {lo:.2} V{hi:.2} M{:.2} {hi:.2} H{:.2} M{:.2} {lo:.2} H{:.2}" stroke="black" fill="none"/>"#,
                cx - cap,
                cx + cap,
                cx - cap,
                cx + cap
            );
        }
        let _ = writeln!(
            svg,
            r#"<text class="tick" x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            base_y + 18.0,
            s.iteration
        );
    }
    let _ = writeln!(
        svg,
        r#"<text class="label" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">Iteration</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="label" x="20" y="{:.2}" text-anchor="middle" font-size="14" transform="rotate(-90 20 {:.2})">Total errors</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn export(stats: &AggregateStats, format: ExportFormat, out_path: &Path, skip_initial: bool) -> io::Result<()> {
    let text = match format {
        ExportFormat::Csv => render_csv(stats),
        ExportFormat::Json => render_json(stats),
        ExportFormat::Svg => render_svg(stats, skip_initial),
    };
    fs::write(out_path, text)
}
