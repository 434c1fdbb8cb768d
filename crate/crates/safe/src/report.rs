//! Plain-text and static HTML renderings of an analysis.

use std::fmt::Write;

use safe_core::rootcause::{CoverageReport, ExplanatoryVerdict, HistogramBin, VarianceReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub cluster_count: usize,
    pub error_count: usize,
    pub noise_count: usize,
    /// Percent of error-inducing images inspected at five per cluster.
    pub inspection_ratio: f64,
    pub rr_threshold: f64,
    pub explanatory_count: usize,
    pub explanatory_percent: f64,
    pub coverage_count: usize,
    pub coverage_total: usize,
    pub histogram: Vec<HistogramBin>,
}

pub struct Analysis<'a> {
    pub summary: &'a AnalysisSummary,
    pub variance: &'a VarianceReport,
    pub verdict: &'a ExplanatoryVerdict,
    pub coverage: &'a CoverageReport,
    /// Up to five member ids per cluster, nearest to a core point first.
    pub representatives: &'a [Vec<String>],
}

fn mark(b: bool) -> &'static str {
    if b {
        "✓"
    } else {
        "✗"
    }
}

pub fn render_text(a: &Analysis) -> String {
    let s = a.summary;
    let mut out = String::new();
    let _ = writeln!(out, "clusters           {}", s.cluster_count);
    let _ = writeln!(out, "error images       {}", s.error_count);
    let _ = writeln!(out, "noise images       {}", s.noise_count);
    let _ = writeln!(out, "inspection ratio   {:.2}%", s.inspection_ratio);
    let _ = writeln!(
        out,
        "explanatory        {}/{} ({:.2}%, rr > {})",
        s.explanatory_count, s.cluster_count, s.explanatory_percent, s.rr_threshold
    );
    let _ = writeln!(out, "coverage           {}/{}", s.coverage_count, s.coverage_total);

    let _ = writeln!(out, "\nvariance reduction");
    let _ = write!(out, "{:>8} {:>6}", "cluster", "size");
    for p in &a.variance.params {
        let _ = write!(out, " {p:>16}");
    }
    let _ = writeln!(out, " {:>11}", "explanatory");
    for (c, v) in a.variance.clusters.iter().zip(&a.verdict.clusters) {
        let size = if c.singleton {
            format!("{}*", c.size)
        } else {
            c.size.to_string()
        };
        let _ = write!(out, "{:>8} {:>6}", c.cluster_id, size);
        for p in &c.params {
            let _ = write!(out, " {:>16.4}", p.rr);
        }
        let _ = writeln!(out, " {:>11}", mark(v.explanatory));
    }
    if a.variance.clusters.iter().any(|c| c.singleton) {
        let _ = writeln!(out, "(* singleton cluster)");
    }

    let _ = writeln!(out, "\nclusters with rr above threshold");
    for b in &s.histogram {
        let _ = writeln!(out, "  > {:>4.0}%  {:>6.2}%", b.threshold * 100.0, b.percent);
    }

    let _ = writeln!(out, "\nunsafe value coverage");
    for i in &a.coverage.items {
        let clusters: Vec<String> = i.clusters.iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "  {} {:<20} {:>10}  {}",
            mark(i.covered),
            i.param,
            i.unsafe_value,
            clusters.join(",")
        );
    }

    let _ = writeln!(out, "\nrepresentatives");
    for (c, reps) in a.representatives.iter().enumerate() {
        let _ = writeln!(out, "  {c:>4}: {}", reps.join(" "));
    }
    out
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:1em 0}\
td,th{border:1px solid #ccc;padding:.3em .6em;text-align:right}th{background:#f3f3f3}\
td.l{text-align:left}.yes{color:#070}.no{color:#a00}.card{display:inline-block;border:1px solid #ccc;\
padding:.5em;margin:.3em;vertical-align:top;min-width:12em}.card code{display:block}";

/// Self-contained page: no scripts, no external assets.
pub fn render_html(a: &Analysis) -> String {
    let s = a.summary;
    let mut h = String::new();
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Root-cause clusters</title><style>{STYLE}</style></head><body>\n"
    );
    let _ = writeln!(h, "<h1>Root-cause clusters</h1>");
    let _ = writeln!(h, "<table>");
    for (k, v) in [
        ("clusters", s.cluster_count.to_string()),
        ("error images", s.error_count.to_string()),
        ("noise images", s.noise_count.to_string()),
        ("inspection ratio", format!("{:.2}%", s.inspection_ratio)),
        (
            "explanatory",
            format!("{}/{} ({:.2}%)", s.explanatory_count, s.cluster_count, s.explanatory_percent),
        ),
        ("coverage", format!("{}/{}", s.coverage_count, s.coverage_total)),
    ] {
        let _ = writeln!(h, "<tr><th>{k}</th><td>{}</td></tr>", esc(&v));
    }
    let _ = writeln!(h, "</table>");

    let _ = writeln!(h, "<h2>Clusters</h2>");
    for (i, c) in a.variance.clusters.iter().enumerate() {
        let verdict = &a.verdict.clusters[i];
        let _ = writeln!(h, "<div class=\"card\"><b>cluster {}</b> ({} images)", c.cluster_id, c.size);
        let _ = writeln!(
            h,
            "<div class=\"{}\">{} explanatory</div>",
            if verdict.explanatory { "yes" } else { "no" },
            mark(verdict.explanatory)
        );
        if let Some(reps) = a.representatives.get(i) {
            for id in reps {
                let _ = writeln!(h, "<code>{}</code>", esc(id));
            }
        }
        let _ = writeln!(h, "</div>");
    }

    let _ = writeln!(h, "<h2>Variance reduction</h2>\n<table><tr><th>cluster</th><th>size</th>");
    for p in &a.variance.params {
        let _ = write!(h, "<th>{}</th>", esc(p));
    }
    let _ = writeln!(h, "</tr>");
    for c in &a.variance.clusters {
        let _ = write!(h, "<tr><td>{}</td><td>{}</td>", c.cluster_id, c.size);
        for p in &c.params {
            let _ = write!(h, "<td>{:.4}</td>", p.rr);
        }
        let _ = writeln!(h, "</tr>");
    }
    let _ = writeln!(h, "</table>");

    let _ = writeln!(h, "<h2>Rate above threshold</h2>\n<table><tr><th>rr &gt;</th><th>clusters</th></tr>");
    for b in &s.histogram {
        let _ = writeln!(h, "<tr><td>{:.0}%</td><td>{:.2}%</td></tr>", b.threshold * 100.0, b.percent);
    }
    let _ = writeln!(h, "</table>");

    let _ = writeln!(
        h,
        "<h2>Unsafe values</h2>\n<table><tr><th></th><th>parameter</th><th>value</th><th>clusters</th></tr>"
    );
    for i in &a.coverage.items {
        let clusters: Vec<String> = i.clusters.iter().map(usize::to_string).collect();
        let _ = writeln!(
            h,
            "<tr><td class=\"{}\">{}</td><td class=\"l\">{}</td><td>{}</td><td class=\"l\">{}</td></tr>",
            if i.covered { "yes" } else { "no" },
            mark(i.covered),
            esc(&i.param),
            i.unsafe_value,
            clusters.join(", ")
        );
    }
    let _ = writeln!(h, "</table>\n</body></html>");
    h
}
