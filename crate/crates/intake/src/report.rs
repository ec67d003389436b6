//! Text renderings of evaluation reports.

use std::fmt::Write;
use std::str::FromStr;

use intake_core::eval::{Dataset, DisagreementReport, EvalReport, ProviderReport};
use intake_core::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown report format `{0}` (expected md, csv or json)")]
pub struct UnknownFormat(pub String);

impl FromStr for ReportFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" | "table-markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(UnknownFormat(s.into())),
        }
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

/// Parses a JSON-rendered report.
pub fn parse_report(json: &str) -> serde_json::Result<EvalReport> {
    serde_json::from_str(json)
}

/// The twelve metric columns: P/R/F1 for Accept, Deny, Question and the
/// weighted average, in that order.
fn metric_row(p: &ProviderReport) -> [Option<f64>; 12] {
    let mut row = [None; 12];
    for (i, c) in p.classes.iter().enumerate() {
        row[i * 3] = Some(c.precision);
        row[i * 3 + 1] = Some(c.recall);
        row[i * 3 + 2] = Some(c.f1);
    }
    if let Some(w) = p.weighted {
        row[9] = Some(w.precision);
        row[10] = Some(w.recall);
        row[11] = Some(w.f1);
    }
    row
}

fn round2(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

fn render_markdown(report: &EvalReport) -> String {
    let rows: Vec<_> = report.providers.iter().map(metric_row).collect();
    // Ties at two decimals are all bolded; nothing is bolded without a comparison.
    let mut best = [None; 12];
    if rows.len() > 1 {
        for (col, slot) in best.iter_mut().enumerate() {
            *slot = rows.iter().filter_map(|r| r[col].map(round2)).max();
        }
    }

    let mut out = String::new();
    out.push_str("| Model |");
    for class in ["Accept", "Deny", "Question", "Weighted average"] {
        for m in ["P", "R", "F1"] {
            let _ = write!(out, " {class} {m} |");
        }
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(12));
    out.push('\n');
    for (p, row) in report.providers.iter().zip(&rows) {
        let _ = write!(out, "| {} |", p.provider);
        for (col, v) in row.iter().enumerate() {
            match v {
                Some(v) if best[col] == Some(round2(*v)) => {
                    let _ = write!(out, " **{v:.2}** |");
                }
                Some(v) => {
                    let _ = write!(out, " {v:.2} |");
                }
                None => out.push_str(" n/a |"),
            }
        }
        out.push('\n');
    }

    for p in &report.providers {
        let _ = write!(out, "\n### Confusion matrix: {}\n\n", p.provider);
        out.push_str("| Gold \\ Predicted | Accept | Deny | Question |\n|---|---:|---:|---:|\n");
        for g in Label::ALL {
            let _ = write!(out, "| {} |", g.display_name());
            for pr in Label::ALL {
                let _ = write!(out, " {} |", p.confusion.get(g, pr));
            }
            out.push('\n');
        }
        let e = &p.errors;
        if e.total() > 0 {
            let _ = writeln!(
                out,
                "\nUnscored: {} content refused, {} parse failures, {} provider unavailable.",
                e.content_refused, e.parse_failure, e.provider_unavailable
            );
        }
    }
    out
}

fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "provider,accept_p,accept_r,accept_f1,deny_p,deny_r,deny_f1,question_p,question_r,question_f1,\
         weighted_p,weighted_r,weighted_f1,scored,content_refused,parse_failure,provider_unavailable\n",
    );
    for p in &report.providers {
        out.push_str(&csv_field(&p.provider));
        for v in metric_row(p) {
            match v {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            p.confusion.total(),
            p.errors.content_refused,
            p.errors.parse_failure,
            p.errors.provider_unavailable
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Label × jurisdiction table of gold counts.
pub fn render_distribution(ds: &Dataset) -> String {
    let mut out = String::from("| Jurisdiction | Accept | Deny | Question | Total |\n|---|---:|---:|---:|---:|\n");
    for (j, c) in ds.distribution() {
        let _ = writeln!(out, "| {j} | {} | {} | {} | {} |", c[0], c[1], c[2], c.iter().sum::<u64>());
    }
    let s = ds.supports();
    let _ = writeln!(out, "| Total | {} | {} | {} | {} |", s[0], s[1], s[2], s.iter().sum::<u64>());
    out
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn render_disagreements(d: &DisagreementReport) -> String {
    let mut out = String::from("## Disagreements\n\n");
    if d.disagreements.is_empty() {
        out.push_str("None.\n");
    }
    for item in &d.disagreements {
        let _ = writeln!(
            out,
            "- **{} / {}** ({}) gold {}, predicted {}",
            item.jurisdiction,
            item.scenario_id,
            item.provider,
            item.gold.display_name(),
            item.predicted.display_name()
        );
        if let Some(q) = &item.question {
            let _ = writeln!(out, "  - question: {}", one_line(q));
        }
        let _ = writeln!(out, "  - explanation: {}", one_line(&item.explanation));
    }
    out.push_str("\n## Unscored\n\n");
    if d.unscored.is_empty() {
        out.push_str("None.\n");
    }
    for item in &d.unscored {
        let _ = writeln!(
            out,
            "- **{} / {}** ({}) gold {}, error {:?}{}",
            item.jurisdiction,
            item.scenario_id,
            item.provider,
            item.gold.display_name(),
            item.error,
            item.error_detail.as_deref().map(|d| format!(": {}", one_line(d))).unwrap_or_default()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use intake_core::eval::{per_class_metrics, weighted_metrics, ConfusionMatrix, ErrorCounts};

    fn provider(name: &str, m: [[u64; 3]; 3]) -> ProviderReport {
        let confusion = ConfusionMatrix(m);
        let classes = per_class_metrics(&confusion);
        ProviderReport {
            provider: name.into(),
            classes,
            weighted: weighted_metrics(&classes).ok(),
            confusion,
            errors: ErrorCounts::default(),
        }
    }

    #[test]
    fn single_provider_markdown_layout() {
        let r = EvalReport { providers: vec![provider("m", [[1, 1, 0], [0, 1, 0], [0, 0, 1]])] };
        let md = render_report(&r, ReportFormat::Markdown);
        let table: Vec<_> = md.lines().take_while(|l| l.starts_with('|')).collect();
        assert_eq!(table.len(), 3, "header, separator, one data row");
        assert_eq!(table[0].matches('|').count(), 14, "model + 12 metric columns");
        assert!(table[0].starts_with("| Model | Accept P | Accept R | Accept F1 | Deny P"));
        assert!(table[0].ends_with("Weighted average F1 |"));
        assert!(table[2].contains("| 0.67 |") && table[2].ends_with("0.75 |"));
        assert!(!table[2].contains("**"));
    }

    #[test]
    fn markdown_bolds_column_maxima() {
        let a = provider("a", [[2, 0, 0], [0, 2, 0], [0, 0, 2]]);
        let b = provider("b", [[1, 1, 0], [1, 1, 0], [1, 1, 0]]);
        let md = render_report(&EvalReport { providers: vec![a, b] }, ReportFormat::Markdown);
        let a_row = md.lines().find(|l| l.starts_with("| a |")).unwrap();
        let b_row = md.lines().find(|l| l.starts_with("| b |")).unwrap();
        assert_eq!(a_row.matches("**").count(), 24);
        assert!(!b_row.contains("**"));
    }

    #[test]
    fn json_round_trip() {
        let r = EvalReport { providers: vec![provider("a", [[3, 1, 0], [2, 7, 1], [0, 1, 1]])] };
        let json = render_report(&r, ReportFormat::Json);
        assert_eq!(parse_report(&json).unwrap(), r);
    }

    #[test]
    fn format_names() {
        assert_eq!("md".parse(), Ok(ReportFormat::Markdown));
        assert_eq!("table-markdown".parse(), Ok(ReportFormat::Markdown));
        assert_eq!("CSV".parse(), Ok(ReportFormat::Csv));
        assert_eq!("xml".parse::<ReportFormat>(), Err(UnknownFormat("xml".into())));
    }

    #[test]
    fn csv_has_full_precision() {
        let r = EvalReport { providers: vec![provider("a", [[1, 1, 0], [0, 1, 0], [0, 0, 1]])] };
        let csv = render_report(&r, ReportFormat::Csv);
        let row = csv.lines().nth(1).unwrap();
        assert!(row.starts_with("a,1,0.5,0.6666666666666666,"));
        assert!(row.ends_with(",0.75,4,0,0,0"));
    }
}
