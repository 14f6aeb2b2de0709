//! Report artifacts: the MAE table, a JSON summary, descriptor selection
//! statistics and the percent-change chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use xchem_core::metrics::{percent_change, MaeRow, MaeTable, SelectionStats};
use xchem_core::model::Variant;
use xchem_core::TargetProperty;

use crate::config::{PipelineConfig, Workspace};
use crate::fsutil::write_atomic;
use crate::harness::MetricsFile;
use crate::select::{read_transcripts, TranscriptRow};

pub fn symbol(t: TargetProperty) -> &'static str {
    match t {
        TargetProperty::Mu => "μ",
        TargetProperty::Alpha => "α",
        TargetProperty::Homo => "ε_H",
        TargetProperty::Lumo => "ε_L",
        TargetProperty::Gap => "Δε",
        TargetProperty::R2 => "⟨R²⟩",
        TargetProperty::Zpve => "ZPVE",
        TargetProperty::U0 => "U_0",
        TargetProperty::U298 => "U_298",
    }
}

pub fn mae_table(metrics: &MetricsFile) -> MaeTable {
    let rows = metrics
        .results
        .iter()
        .map(|(target, by_variant)| MaeRow {
            target: *target,
            values: vec![[by_variant.get(&Variant::Base).map(|r| r.mean_mae), by_variant.get(&Variant::Fused).map(|r| r.mean_mae)]],
        })
        .collect();
    MaeTable { backbones: vec![metrics.backbone.clone()], rows }
}

/// Tallies the accepted round of every transcript.
pub fn selection_stats(rows: &[TranscriptRow]) -> SelectionStats {
    let mut stats = SelectionStats::new();
    for r in rows.iter().filter(|r| r.verdict.accept) {
        if let Some(p) = &r.proposal {
            stats.record(r.target, &p.subset, &p.weights);
        }
    }
    stats
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartBar {
    pub label: String,
    pub percent: f64,
}

pub fn chart_bars(table: &MaeTable) -> Vec<ChartBar> {
    let multi = table.backbones.len() > 1;
    table
        .percent_changes()
        .into_iter()
        .filter_map(|(t, bb, pc)| {
            let label = if multi { format!("{} · {bb}", symbol(t)) } else { symbol(t).to_string() };
            pc.map(|percent| ChartBar { label, percent })
        })
        .collect()
}

/// Horizontal bar chart of percent changes; negative bars are improvements.
pub fn percent_change_svg(bars: &[ChartBar]) -> String {
    const ROW: f64 = 24.0;
    const LABEL: f64 = 140.0;
    const HALF: f64 = 220.0;
    let width = LABEL + 2.0 * HALF + 80.0;
    let height = 60.0 + ROW * bars.len() as f64;
    let zero = LABEL + HALF;
    let scale = HALF / bars.iter().map(|b| b.percent.abs()).fold(1.0, f64::max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">Percent change in MAE (fused vs base)</text>"#, width / 2.0);
    for (i, b) in bars.iter().enumerate() {
        let y = 40.0 + ROW * i as f64;
        let w = b.percent.abs() * scale;
        let x = if b.percent < 0.0 { zero - w } else { zero };
        let fill = if b.percent < 0.0 { "#2b8a3e" } else { "#c92a2a" };
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LABEL - 8.0, y + 15.0, escape(&b.label));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y}" width="{w:.2}" height="{}" fill="{fill}" data-percent="{:.4}"/>"#,
            ROW - 6.0,
            b.percent
        );
        let (tx, anchor) = if b.percent < 0.0 { (x - 4.0, "end") } else { (x + w + 4.0, "start") };
        let _ = writeln!(s, r#"<text x="{tx:.2}" y="{}" text-anchor="{anchor}">{:+.1}%</text>"#, y + 15.0, b.percent);
    }
    let _ = writeln!(s, r#"<line x1="{zero}" y1="32" x2="{zero}" y2="{}" stroke="black"/>"#, height - 12.0);
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Debug, Serialize)]
struct VariantSummary {
    mean_mae: f64,
    fold_mae: Vec<f64>,
    best_epochs: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
struct TargetSummary {
    unit: &'static str,
    base: Option<VariantSummary>,
    fused: Option<VariantSummary>,
    percent_change: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
struct ReportJson<'a> {
    backbone: &'a str,
    config: &'a PipelineConfig,
    targets: BTreeMap<TargetProperty, TargetSummary>,
    transcript_rows: usize,
    skipped_transcript_lines: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportOutcome {
    pub written: Vec<PathBuf>,
    pub skipped_transcript_lines: usize,
}

pub fn run_report(ws: &Workspace) -> Result<ReportOutcome> {
    let metrics = MetricsFile::read(&ws.metrics())?;
    let (rows, skipped) = read_transcripts(&ws.transcripts())?;
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed transcript line(s)");
    }
    write_reports(&ws.reports(), &metrics, &rows, skipped)
}

pub fn write_reports(dir: &Path, metrics: &MetricsFile, rows: &[TranscriptRow], skipped: usize) -> Result<ReportOutcome> {
    let table = mae_table(metrics);
    let summary = |v: Option<&crate::harness::VariantResult>| {
        v.map(|r| VariantSummary {
            mean_mae: r.mean_mae,
            fold_mae: r.folds.iter().map(|f| f.mae).collect(),
            best_epochs: r.folds.iter().map(|f| f.best_epoch).collect(),
        })
    };
    let targets = metrics
        .results
        .iter()
        .map(|(t, by)| {
            let base = summary(by.get(&Variant::Base));
            let fused = summary(by.get(&Variant::Fused));
            let pc = match (&base, &fused) {
                (Some(b), Some(f)) => percent_change(b.mean_mae, f.mean_mae).ok(),
                _ => None,
            };
            (*t, TargetSummary { unit: t.unit(), base, fused, percent_change: pc })
        })
        .collect();
    let json = ReportJson {
        backbone: &metrics.backbone,
        config: &metrics.config,
        targets,
        transcript_rows: rows.len(),
        skipped_transcript_lines: skipped,
    };

    let stat_targets: Vec<TargetProperty> = {
        let mut t: Vec<TargetProperty> = rows.iter().map(|r| r.target).collect();
        t.extend(metrics.results.keys());
        t.sort();
        t.dedup();
        t
    };
    let outputs = [
        ("table2.csv", table.to_csv()),
        ("report.json", serde_json::to_string_pretty(&json)? + "\n"),
        ("selection_stats.csv", selection_stats(rows).to_csv(&stat_targets)),
        ("percent_change.svg", percent_change_svg(&chart_bars(&table))),
    ];
    let mut written = Vec::new();
    for (name, body) in outputs {
        let p = dir.join(name);
        write_atomic(&p, body.as_bytes())?;
        written.push(p);
    }
    Ok(ReportOutcome { written, skipped_transcript_lines: skipped })
}
