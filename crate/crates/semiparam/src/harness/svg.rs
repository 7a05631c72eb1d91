//! Minimal deterministic SVG bar charts: one bar per method with a std
//! error bar, plus a horizontal rule at the best (lowest) mean.

use super::AggregateRow;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 110.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders one grouped bar chart over the given aggregate rows (one row per
/// method). Output is byte-deterministic for identical input.
pub fn bar_chart(title: &str, rows: &[&AggregateRow]) -> String {
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let max_val = rows
        .iter()
        .map(|r| r.mean_rmse + r.std_rmse)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let scale = plot_h / (1.1 * max_val);
    let n = rows.len().max(1) as f64;
    let slot = plot_w / n;
    let bar_w = 0.6 * slot;
    let y_of = |v: f64| MARGIN_T + plot_h - v * scale;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
    // axes
    s.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h
    ));
    s.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        WIDTH - MARGIN_R,
        MARGIN_T + plot_h
    ));
    // y ticks
    for k in 0..=5 {
        let v = 1.1 * max_val * k as f64 / 5.0;
        let y = y_of(v);
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{MARGIN_L}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_L - 5.0,
            fmt(y),
            fmt(y)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 8.0,
            fmt(y + 4.0),
            fmt(v)
        ));
    }
    // bars with error bars
    for (i, row) in rows.iter().enumerate() {
        let x0 = MARGIN_L + slot * i as f64 + 0.5 * (slot - bar_w);
        let y = y_of(row.mean_rmse);
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#4878a8\" stroke=\"black\"/>\n",
            fmt(x0),
            fmt(y),
            fmt(bar_w),
            fmt((MARGIN_T + plot_h - y).max(0.0))
        ));
        if row.std_rmse > 0.0 {
            let xc = x0 + 0.5 * bar_w;
            let y_hi = y_of(row.mean_rmse + row.std_rmse);
            let y_lo = y_of((row.mean_rmse - row.std_rmse).max(0.0));
            s.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                fmt(xc),
                fmt(y_hi),
                fmt(xc),
                fmt(y_lo)
            ));
            for ye in [y_hi, y_lo] {
                s.push_str(&format!(
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
                    fmt(xc - 6.0),
                    fmt(ye),
                    fmt(xc + 6.0),
                    fmt(ye)
                ));
            }
        }
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\" transform=\"rotate(-45 {} {})\">{}</text>\n",
            fmt(x0 + 0.5 * bar_w),
            fmt(MARGIN_T + plot_h + 16.0),
            fmt(x0 + 0.5 * bar_w),
            fmt(MARGIN_T + plot_h + 16.0),
            xml_escape(&row.method)
        ));
    }
    // horizontal rule at the best mean
    if let Some(best) = rows
        .iter()
        .map(|r| r.mean_rmse)
        .min_by(|a, b| a.total_cmp(b))
    {
        let y = y_of(best);
        s.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1.5\" stroke-dasharray=\"6,3\"/>\n",
            fmt(y),
            WIDTH - MARGIN_R,
            fmt(y)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">best {}</text>\n",
            WIDTH - MARGIN_R - 4.0,
            fmt(y - 4.0),
            fmt(best)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
