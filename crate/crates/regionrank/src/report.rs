//! Rendering evaluation reports as aligned text, JSON and CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use regionrank_core::eval::{Evaluation, MetricRow};
use regionrank_core::EvalReport;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::records::write_jsonl;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.1}%"))
}

/// Aligned text table: overall row first, then one row per category.
pub fn render_table(report: &EvalReport) -> String {
    let mut header = vec![
        "category".to_string(),
        "N".into(),
        "scored".into(),
        "meanIoU".into(),
    ];
    header.extend(
        report
            .overall
            .hit_rates
            .iter()
            .map(|h| format!("IoU@{}", h.threshold)),
    );
    header.extend(
        [
            "tok_sel", "tok_ocr", "tok_img", "save_ocr", "save_img", "hit", "ocr_ceil", "sel_err",
            "missing",
        ]
        .map(String::from),
    );
    let row = |r: &MetricRow| {
        let mut v = vec![
            r.label.clone(),
            r.samples.to_string(),
            r.scored.to_string(),
            format!("{:.3}", r.mean_iou),
        ];
        v.extend(
            r.hit_rates
                .iter()
                .map(|h| format!("{:.1}%", h.rate * 100.0)),
        );
        v.extend([
            r.tokens_selected.to_string(),
            r.tokens_all_regions.to_string(),
            r.tokens_full_image.to_string(),
            pct(r.savings_vs_all_regions),
            pct(r.savings_vs_full_image),
            r.failures.hit.to_string(),
            r.failures.ocr_ceiling.to_string(),
            r.failures.selection_error.to_string(),
            r.failures.missing_page.to_string(),
        ]);
        v
    };
    let mut rows = vec![header];
    rows.push(row(&report.overall));
    rows.extend(report.categories.iter().map(row));

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                if c == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(
                out,
                "{}",
                "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
            );
        }
    }
    let o = &report.overall;
    if let (Some(m), Some(p)) = (o.failure_mean_iou, o.failure_partial_overlap_rate) {
        let _ = writeln!(
            out,
            "\nfailures: {} (no selected region adequate: {}), mean IoU {:.3}, {:.1}% with IoU >= 0.25",
            o.failures.ocr_ceiling + o.failures.selection_error,
            o.no_selected_adequate,
            m,
            p * 100.0
        );
    }
    match &report.variance {
        Some(v) if v.zero_variance => {
            let _ = writeln!(out, "variance: none (IoU identical across samples)");
        }
        Some(v) => {
            let _ = writeln!(
                out,
                "variance: within-document {:.1}%, between-document {:.1}%",
                v.within_fraction * 100.0,
                v.between_fraction * 100.0
            );
        }
        None => {}
    }
    out
}

/// Machine-readable report: the effective config plus one object per row.
pub fn report_json(report: &EvalReport, config: &RunConfig) -> serde_json::Value {
    let mut rows = vec![serde_json::to_value(&report.overall).expect("row serializes")];
    rows.extend(
        report
            .categories
            .iter()
            .map(|r| serde_json::to_value(r).expect("row serializes")),
    );
    json!({
        "config": config.to_json(),
        "mode": report.mode,
        "scoring": report.config,
        "rows": rows,
        "variance": report.variance,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.txt`, `report.json` and `outcomes.jsonl` under `dir`.
pub fn write_evaluation(dir: &Path, eval: &Evaluation, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("report.txt"), &render_table(&eval.report))?;
    let json = serde_json::to_string_pretty(&report_json(&eval.report, config)).expect("json");
    write_text(&dir.join("report.json"), &json)?;
    write_jsonl(&dir.join("outcomes.jsonl"), &eval.outcomes)
}

/// CSV with one row per ablation configuration.
pub fn ablation_csv(rows: &[Evaluation]) -> String {
    let mut out = String::from("percentile,strategy,min_overlap,token_agg,samples,scored,mean_iou");
    let thresholds: Vec<f64> = rows
        .first()
        .map(|r| {
            r.report
                .overall
                .hit_rates
                .iter()
                .map(|h| h.threshold)
                .collect()
        })
        .unwrap_or_default();
    for t in &thresholds {
        let _ = write!(out, ",hit_rate_{t}");
    }
    out.push_str(
        ",tokens_selected,savings_vs_all_regions,savings_vs_full_image,hit,ocr_ceiling,selection_error,missing_page\n",
    );
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.6}"));
    for r in rows {
        let c = &r.report.config;
        let o = &r.report.overall;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{:.6}",
            c.percentile, c.strategy, c.min_overlap, c.token_agg, o.samples, o.scored, o.mean_iou
        );
        for h in &o.hit_rates {
            let _ = write!(out, ",{:.6}", h.rate);
        }
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{},{}",
            o.tokens_selected,
            opt(o.savings_vs_all_regions),
            opt(o.savings_vs_full_image),
            o.failures.hit,
            o.failures.ocr_ceiling,
            o.failures.selection_error,
            o.failures.missing_page
        );
    }
    out
}

/// Writes `ablation.csv`, `ablation.jsonl` and `ablation.txt` under `dir`.
pub fn write_ablation(dir: &Path, rows: &[Evaluation], config: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("ablation.csv"), &ablation_csv(rows))?;
    let lines: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            json!({
                "scoring": r.report.config,
                "overall": r.report.overall,
                "variance": r.report.variance,
            })
        })
        .collect();
    write_jsonl(&dir.join("ablation.jsonl"), &lines)?;
    let mut text = format!("# config: {}\n", config.to_json());
    for r in rows {
        let c = &r.report.config;
        let _ = writeln!(
            text,
            "\n== P{} strategy={} min_overlap={} token_agg={} ==",
            c.percentile, c.strategy, c.min_overlap, c.token_agg
        );
        text.push_str(&render_table(&r.report));
    }
    write_text(&dir.join("ablation.txt"), &text)
}
