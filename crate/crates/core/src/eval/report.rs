//! CSV, aligned-text and SVG renderings of evaluation results.

use std::fmt::Write as _;

use super::ablation::{AblationReport, AblationRow};
use super::metrics::MetricsReport;
use crate::error::{Result, WetError};

const ABLATION_COLUMNS: [&str; 8] = [
    "case_study",
    "axis",
    "value",
    "param_count",
    "test_accuracy",
    "val_accuracy",
    "best_epoch",
    "status",
];

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn ablation_cells(r: &AblationRow) -> Vec<String> {
    vec![
        r.case_study.to_string(),
        r.axis.clone(),
        r.value.clone(),
        r.param_count.to_string(),
        r.test_accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_default(),
        r.val_accuracy
            .map(|a| format!("{a:.4}"))
            .unwrap_or_default(),
        opt(&r.best_epoch),
        r.status.clone(),
    ]
}

pub fn ablation_csv(report: &AblationReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ABLATION_COLUMNS)
        .map_err(|e| WetError::Internal(e.to_string()))?;
    for r in &report.rows {
        w.write_record(ablation_cells(r))
            .map_err(|e| WetError::Internal(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| WetError::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| WetError::Internal(e.to_string()))
}

/// Left-aligned columns separated by two spaces.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    line(
        widths
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn ablation_table(report: &AblationReport) -> String {
    let rows: Vec<Vec<String>> = report.rows.iter().map(ablation_cells).collect();
    aligned_table(&ABLATION_COLUMNS, &rows)
}

pub fn metrics_table(m: &MetricsReport) -> String {
    let mut out = aligned_table(
        &["class", "precision", "recall", "f1", "support"],
        &m.per_class
            .iter()
            .map(|c| {
                vec![
                    c.class.clone(),
                    format!("{:.4}", c.precision),
                    format!("{:.4}", c.recall),
                    format!("{:.4}", c.f1),
                    c.support.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    let cm = &m.confusion;
    let _ = writeln!(
        out,
        "\naccuracy   {:.4}\nprecision  {:.4}\nrecall     {:.4}\nf1         {:.4}",
        m.accuracy, m.precision, m.recall, m.f1
    );
    let _ = writeln!(
        out,
        "confusion  TP={} FP={} TN={} FN={}",
        cm.tp, cm.fp, cm.tn, cm.fn_
    );
    if !m.degenerate.is_empty() {
        let _ = writeln!(out, "degenerate {}", m.degenerate.join(", "));
    }
    out
}

/// Test accuracy against axis position, one polyline per case study.
pub fn ablation_svg(report: &AblationReport) -> String {
    const W: f64 = 720.0;
    const PANEL: f64 = 150.0;
    const PAD: f64 = 40.0;
    let mut studies: Vec<usize> = report.rows.iter().map(|r| r.case_study).collect();
    studies.dedup();
    let height = PAD + studies.len() as f64 * (PANEL + PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, study) in studies.iter().enumerate() {
        let rows: Vec<&AblationRow> = report
            .rows
            .iter()
            .filter(|r| r.case_study == *study)
            .collect();
        let top = PAD + k as f64 * (PANEL + PAD);
        let (left, right) = (80.0, W - 40.0);
        let _ = writeln!(
            s,
            r#"<text x="{left}" y="{}" font-weight="bold">case study {study}: {}</text>"#,
            top - 8.0,
            rows[0].axis
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="black"/>"#,
            right - left
        );
        let accs: Vec<f64> = rows.iter().filter_map(|r| r.test_accuracy).collect();
        let lo = accs.iter().copied().fold(1.0, f64::min).min(0.9);
        let y = |a: f64| top + PANEL - (a - lo) / (1.0 - lo).max(1e-9) * PANEL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{lo:.2}</text>"#,
            left - 4.0,
            top + PANEL
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">1.00</text>"#,
            left - 4.0,
            top + 10.0
        );
        let step = if rows.len() > 1 {
            (right - left - 40.0) / (rows.len() - 1) as f64
        } else {
            0.0
        };
        let mut points = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let x = left + 20.0 + i as f64 * step;
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                top + PANEL + 14.0,
                r.value
            );
            if let Some(a) = r.test_accuracy {
                points.push(format!("{x:.1},{:.1}", y(a)));
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#,
                    y(a)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="steelblue"/>"#,
            points.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> AblationReport {
        let row = |c, axis: &str, v: &str, acc| AblationRow {
            case_study: c,
            axis: axis.into(),
            value: v.into(),
            param_count: 100,
            test_accuracy: acc,
            val_accuracy: acc,
            best_epoch: acc.map(|_| 3),
            status: if acc.is_some() {
                "ok".into()
            } else {
                "failed: diverged".into()
            },
        };
        AblationReport {
            rows: vec![
                row(1, "dropout", "0.5", Some(0.99)),
                row(1, "dropout", "0.6", None),
                row(2, "loss", "mse", Some(0.95)),
            ],
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = ablation_csv(&report()).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv
            .lines()
            .next()
            .unwrap()
            .starts_with("case_study,axis,value,param_count"));
        assert!(csv.contains("failed: diverged"));
    }

    #[test]
    fn table_is_aligned() {
        let t = ablation_table(&report());
        let lines: Vec<&str> = t.lines().collect();
        let col = lines[0].find("value").unwrap();
        assert_eq!(&lines[2][col..col + 3], "0.5");
    }

    #[test]
    fn svg_has_one_panel_per_study() {
        let svg = ablation_svg(&report());
        assert_eq!(svg.matches("case study").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
