use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{IterationReport, PipelineError};
use crate::metrics::MetricsReport;

/// Write `report` as pretty JSON and as a static HTML page.
pub fn write_report<T: Serialize>(
    report: &T,
    json_path: &Path,
    html_path: &Path,
    html: fn(&T) -> String,
) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    std::fs::write(json_path, text).map_err(|e| PipelineError::io(json_path, e))?;
    std::fs::write(html_path, html(report)).map_err(|e| PipelineError::io(html_path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title>\n\
         <style>body{{font-family:sans-serif;max-width:60em;margin:2em auto}}\
         table{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:.2em .6em;text-align:left}}</style>\n\
         </head><body>\n<h1>{t}</h1>\n{body}</body></html>\n",
        t = escape(title)
    )
}

fn table<K: ToString, V: ToString>(head: (&str, &str), rows: impl IntoIterator<Item = (K, V)>) -> String {
    let mut s = format!("<table><tr><th>{}</th><th>{}</th></tr>\n", head.0, head.1);
    for (k, v) in rows {
        let _ = writeln!(s, "<tr><td>{}</td><td>{}</td></tr>", escape(&k.to_string()), escape(&v.to_string()));
    }
    s + "</table>\n"
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn render_iteration_html(r: &IterationReport) -> String {
    let mut b = String::new();
    let summary = [
        ("functions", r.functions.to_string()),
        ("exported triplets", r.exported.to_string()),
        ("VT", r.vt.map_or("n/a".into(), pct)),
        ("converged", r.converged.to_string()),
        ("elapsed", format!("{:.1} s", r.elapsed_secs)),
    ];
    b += &table(("", ""), summary);
    b += "<h2>Candidates</h2>\n<table><tr><th>direction</th><th>attempted</th><th>accepted</th><th>rejected</th></tr>\n";
    for (d, n) in &r.attempted {
        let _ = writeln!(
            b,
            "<tr><td>{d}</td><td>{n}</td><td>{}</td><td>{}</td></tr>",
            r.accepted.get(d).unwrap_or(&0),
            r.rejected.get(d).unwrap_or(&0)
        );
    }
    b += "</table>\n<h2>Exported by generated language</h2>\n";
    b += &table(("language", "triplets"), r.accepted_by_language.iter());
    b += "<h2>Rejections by stage</h2>\n";
    b += &table(("stage", "count"), r.rejections_by_stage.iter());
    b += "<h2>Rejection error types</h2>\n";
    b += &table(("type", "count"), r.rejection_histogram.iter().filter(|(_, n)| **n > 0).map(|(t, n)| (t.label(), n)));
    b += "<h2>Endpoints</h2>\n";
    b += &table(("role", "endpoint"), r.endpoints.iter());
    if !r.notes.is_empty() {
        b += "<h2>Notes</h2>\n<ul>\n";
        for n in &r.notes {
            let _ = writeln!(b, "<li>{}</li>", escape(n));
        }
        b += "</ul>\n";
    }
    page(&format!("Iteration {}", r.iteration), &b)
}

pub fn render_metrics_html(m: &MetricsReport) -> String {
    let mut b = String::new();
    let mut rows = vec![
        ("problems".to_string(), m.problems.to_string()),
        ("samples per problem".into(), m.samples_per_problem.to_string()),
        ("BLEU".into(), pct(m.bleu)),
        ("CodeBLEU n-gram".into(), m.codebleu_ngram.map_or("n/a".into(), pct)),
        ("CPass".into(), pct(m.cpass)),
    ];
    rows.extend(m.pass_at.iter().map(|(k, v)| (format!("Pass@{k}"), pct(*v))));
    rows.push(("VT".into(), m.vt.map_or("n/a".into(), pct)));
    rows.push(("extraction failures".into(), m.extraction_failures.to_string()));
    b += &table(("metric", "value"), rows);
    b += "<h2>Error types</h2>\n";
    b += &table(
        ("type", "count"),
        m.error_histogram.iter().map(|(t, n)| (format!("{} ({})", t.label(), t.description()), n)),
    );
    if !m.pearson.is_empty() {
        b += "<h2>Pearson correlation</h2>\n";
        b += &table(("pair", "r"), m.pearson.iter().map(|(k, v)| (k, format!("{v:.4}"))));
    }
    for n in &m.notes {
        let _ = writeln!(b, "<p>{}</p>", escape(n));
    }
    page("Evaluation", &b)
}
