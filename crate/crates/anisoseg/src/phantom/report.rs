//! Summary tables and grouped boxplots from an experiment results CSV.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::phantom::experiment::ResultRow;
use crate::stats::percentile_of;

/// Canonical approach order for tables and plots.
const APPROACHES: [&str; 4] = ["single", "dual", "triple", "ensemble"];
const REGIONS: [&str; 4] = ["whole", "apex", "mid", "base"];
const METRICS: [(&str, &str); 3] = [
    ("dsc", "DSC"),
    ("abd_mm", "ABD (mm)"),
    ("hd95_mm", "95-HD (mm)"),
];

/// Five-number summary of one value group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quartiles by linear interpolation between order statistics.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(BoxStats {
        n: sorted.len(),
        min: sorted[0],
        q1: percentile_of(&sorted, 25.0),
        median: percentile_of(&sorted, 50.0),
        q3: percentile_of(&sorted, 75.0),
        max: sorted[sorted.len() - 1],
    })
}

/// One summary table line.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub approach: String,
    pub region: String,
    pub metric: String,
    pub stats: BoxStats,
}

fn metric_value(row: &ResultRow, metric: &str) -> Option<f64> {
    match metric {
        "dsc" => Some(row.dsc),
        "abd_mm" => row.abd_mm,
        "hd95_mm" => row.hd95_mm,
        _ => None,
    }
}

fn group_values(rows: &[ResultRow], approach: &str, region: &str, metric: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.approach == approach && r.region == region)
        .filter_map(|r| metric_value(r, metric))
        .collect()
}

/// Per (metric, region, approach) five-number summaries; empty groups are
/// omitted.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (metric, _) in METRICS {
        for region in REGIONS {
            for approach in APPROACHES {
                if let Some(stats) = box_stats(&group_values(rows, approach, region, metric)) {
                    out.push(SummaryRow {
                        approach: approach.to_string(),
                        region: region.to_string(),
                        metric: metric.to_string(),
                        stats,
                    });
                }
            }
        }
    }
    out
}

/// Reads the pinned results schema back into rows.
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let expected = ["case", "approach", "region", "dsc", "abd_mm", "hd95_mm"];
    if header.iter().ne(expected) {
        return Err(Error::CorruptFile(format!(
            "results header {:?} != {:?}",
            header.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::CorruptFile(format!("bad float `{s}`: {e}")))
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        rows.push(ResultRow {
            case: r[0].to_string(),
            approach: r[1].to_string(),
            region: r[2].to_string(),
            dsc: parse_opt(&r[3])?.ok_or_else(|| {
                Error::CorruptFile("dsc column must not be empty".into())
            })?,
            abd_mm: parse_opt(&r[4])?,
            hd95_mm: parse_opt(&r[5])?,
        });
    }
    Ok(rows)
}

/// Line style distinguishing approaches in the plots (dash patterns).
fn dash_pattern(approach: &str) -> &'static str {
    match approach {
        "single" => "none",
        "dual" => "7 3",
        "triple" => "2 3",
        _ => "8 3 2 3",
    }
}

struct Scale {
    lo: f64,
    hi: f64,
    top: f64,
    bottom: f64,
}

impl Scale {
    fn y(&self, v: f64) -> f64 {
        let t = (v - self.lo) / (self.hi - self.lo);
        self.bottom - t * (self.bottom - self.top)
    }
}

/// Renders grouped boxplots of one metric: region groups on the x axis,
/// one box per approach inside each group.
pub fn render_boxplot_svg(rows: &[ResultRow], metric: &str, label: &str) -> String {
    let approaches: Vec<&str> = APPROACHES
        .iter()
        .copied()
        .filter(|a| rows.iter().any(|r| &r.approach == a))
        .collect();
    let mut groups: Vec<(usize, usize, BoxStats)> = Vec::new();
    for (ri, region) in REGIONS.iter().enumerate() {
        for (ai, approach) in approaches.iter().enumerate() {
            if let Some(stats) = box_stats(&group_values(rows, approach, region, metric)) {
                groups.push((ri, ai, stats));
            }
        }
    }
    let (width, height) = (720.0, 400.0);
    let (left, right, top, bottom) = (64.0, 16.0, 40.0, 48.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, s) in &groups {
        lo = lo.min(s.min);
        hi = hi.max(s.max);
    }
    if groups.is_empty() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        // degenerate range: pad around the single value
        let pad = hi.abs().max(1.0) * 0.1;
        lo -= pad;
        hi += pad;
    }
    let pad = (hi - lo) * 0.06;
    let scale = Scale {
        lo: lo - pad,
        hi: hi + pad,
        top,
        bottom: height - bottom,
    };
    let plot_w = width - left - right;
    let group_w = plot_w / REGIONS.len() as f64;
    let slot_w = group_w / (approaches.len().max(1) as f64 + 0.5);
    let box_w = slot_w * 0.62;

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{label}</text>\n",
        width / 2.0
    ));
    // y axis with five ticks
    svg.push_str(&format!(
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>\n",
        height - bottom
    ));
    for i in 0..=4 {
        let v = scale.lo + (scale.hi - scale.lo) * i as f64 / 4.0;
        let y = scale.y(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#cccccc\"/>\n",
            left,
            width - right
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{v:.3}</text>\n",
            left - 6.0,
            y + 4.0
        ));
    }
    // x axis group labels
    for (ri, region) in REGIONS.iter().enumerate() {
        let cx = left + (ri as f64 + 0.5) * group_w;
        svg.push_str(&format!(
            "  <text x=\"{cx:.2}\" y=\"{}\" text-anchor=\"middle\">{region}</text>\n",
            height - bottom + 20.0
        ));
    }
    // legend
    for (ai, approach) in approaches.iter().enumerate() {
        let x = left + ai as f64 * 130.0;
        let y = height - 12.0;
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\" \
             stroke-dasharray=\"{}\"/>\n",
            x + 28.0,
            dash_pattern(approach)
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\">{approach}</text>\n",
            x + 34.0,
            y + 4.0
        ));
    }
    // boxes
    for (ri, ai, s) in &groups {
        let cx = left + *ri as f64 * group_w + (*ai as f64 + 0.75) * slot_w;
        let dash = dash_pattern(approaches[*ai]);
        let (x0, x1) = (cx - box_w / 2.0, cx + box_w / 2.0);
        let (yq1, yq3) = (scale.y(s.q1), scale.y(s.q3));
        let (ymin, ymax) = (scale.y(s.min), scale.y(s.max));
        let ymed = scale.y(s.median);
        svg.push_str(&format!(
            "  <line x1=\"{cx:.2}\" y1=\"{ymax:.2}\" x2=\"{cx:.2}\" y2=\"{yq3:.2}\" \
             stroke=\"black\" stroke-dasharray=\"{dash}\"/>\n"
        ));
        svg.push_str(&format!(
            "  <line x1=\"{cx:.2}\" y1=\"{yq1:.2}\" x2=\"{cx:.2}\" y2=\"{ymin:.2}\" \
             stroke=\"black\" stroke-dasharray=\"{dash}\"/>\n"
        ));
        for wy in [ymin, ymax] {
            svg.push_str(&format!(
                "  <line x1=\"{:.2}\" y1=\"{wy:.2}\" x2=\"{:.2}\" y2=\"{wy:.2}\" \
                 stroke=\"black\"/>\n",
                cx - box_w / 4.0,
                cx + box_w / 4.0
            ));
        }
        svg.push_str(&format!(
            "  <rect x=\"{x0:.2}\" y=\"{yq3:.2}\" width=\"{box_w:.2}\" height=\"{:.2}\" \
             fill=\"#e8e8e8\" stroke=\"black\" stroke-dasharray=\"{dash}\"/>\n",
            (yq1 - yq3).max(0.5)
        ));
        svg.push_str(&format!(
            "  <line x1=\"{x0:.2}\" y1=\"{ymed:.2}\" x2=\"{x1:.2}\" y2=\"{ymed:.2}\" \
             stroke=\"black\" stroke-width=\"2\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "approach", "region", "metric", "n", "min", "q1", "median", "q3", "max",
    ])?;
    for r in rows {
        w.write_record([
            r.approach.as_str(),
            r.region.as_str(),
            r.metric.as_str(),
            &r.stats.n.to_string(),
            &format!("{:.6}", r.stats.min),
            &format!("{:.6}", r.stats.q1),
            &format!("{:.6}", r.stats.median),
            &format!("{:.6}", r.stats.q3),
            &format!("{:.6}", r.stats.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a results CSV and writes summary.csv plus one boxplot SVG per
/// metric into `out_dir`.
pub fn emit_report(results_csv: &Path, out_dir: &Path) -> Result<()> {
    let rows = read_results_csv(results_csv)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} contains no result rows",
            results_csv.display()
        )));
    }
    fs::create_dir_all(out_dir)?;
    write_summary_csv(&out_dir.join("summary.csv"), &summarize(&rows))?;
    for (metric, label) in METRICS {
        let svg = render_boxplot_svg(&rows, metric, label);
        fs::write(out_dir.join(format!("boxplot_{metric}.svg")), svg)?;
    }
    Ok(())
}
