//! Plain-text rendering of report artifacts: the per-scene rarity table,
//! the refinement verdict with its per-seed distribution, and the two-sided
//! confounder summary. Output is fully determined by the report contents —
//! no paths, clocks, or host details — so identical runs render identically.

use std::fmt::Write;

use scenesift_core::hypothesis::RunReport;
use scenesift_core::refinement::{ConfounderReport, Proposition, ValidationReport};

use crate::commands::{ConfounderArtifact, ValidationArtifact};

fn pct(fraction: f64) -> String {
    format!("{:.2}%", 100.0 * fraction)
}

/// Per-scene table, rarest first: scenes are ordered by significance ratio
/// descending, ties broken by scene id.
pub fn render_run_report(report: &RunReport) -> String {
    let mut out = String::new();
    let targets = report.target_nodes.join(", ");
    writeln!(
        out,
        "Scored {} test scenes at alpha {} (targets: {targets}; model {}{})",
        report.scene_reports.len(),
        report.alpha,
        report.model_fingerprint,
        match report.split_seed {
            Some(seed) => format!("; split seed {seed}"),
            None => String::new(),
        },
    )
    .unwrap();
    writeln!(
        out,
        "Flagged {} of {} scenes ({})",
        report.rss,
        report.scene_reports.len(),
        pct(report.rss_fraction),
    )
    .unwrap();
    if report.scene_reports.is_empty() {
        return out;
    }

    let mut rows: Vec<(&str, bool, f64, usize, f64)> = report
        .scene_reports
        .iter()
        .map(|s| {
            let ratio = if s.n_total > 0 {
                s.n_significant / s.n_total as f64
            } else {
                0.0
            };
            (s.scene_id.as_str(), s.relevant, s.n_significant, s.n_total, ratio)
        })
        .collect();
    rows.sort_by(|a, b| b.4.total_cmp(&a.4).then_with(|| a.0.cmp(b.0)));

    let id_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(5).max(5);
    writeln!(out).unwrap();
    writeln!(
        out,
        "{:<id_width$}  flagged  n_significant  pairs  ratio",
        "scene",
    )
    .unwrap();
    for (scene_id, relevant, n_sig, n_total, ratio) in rows {
        writeln!(
            out,
            "{scene_id:<id_width$}  {:<7}  {n_sig:>13.4}  {n_total:>5}  {ratio:.4}",
            if relevant { "yes" } else { "no" },
        )
        .unwrap();
    }
    out
}

fn verdict_word(proposition: Proposition, tie: bool) -> &'static str {
    match (proposition, tie) {
        (Proposition::Valid, _) => "valid",
        (Proposition::Invalid, true) => "invalid (tie)",
        (Proposition::Invalid, false) => "invalid",
    }
}

fn distribution(values: &[f64]) -> (f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    (sorted[0], median, sorted[n - 1])
}

fn write_validation_body(out: &mut String, report: &ValidationReport) {
    writeln!(
        out,
        "verdict: {} (median flagged-scene count {} -> {}, {:+.2}%)",
        verdict_word(report.proposition, report.tie),
        report.rss_initial,
        report.rss_after,
        report.relative_rss_change,
    )
    .unwrap();
    writeln!(
        out,
        "relative change over {} iteration(s): mean {:+.2}%, median {:+.2}%",
        report.iterations.len(),
        report.mean_relative_change,
        report.median_relative_change,
    )
    .unwrap();

    let initials: Vec<f64> = report.iterations.iter().map(|i| i.rss_initial as f64).collect();
    let afters: Vec<f64> = report.iterations.iter().map(|i| i.rss_after as f64).collect();
    let changes: Vec<f64> = report.iterations.iter().map(|i| i.relative_change).collect();
    let (i_min, i_med, i_max) = distribution(&initials);
    let (a_min, a_med, a_max) = distribution(&afters);
    let (c_min, c_med, c_max) = distribution(&changes);
    writeln!(
        out,
        "distribution over {} sample(s):",
        report.iterations.len()
    )
    .unwrap();
    writeln!(out, "  flagged before  min {i_min}  median {i_med}  max {i_max}").unwrap();
    writeln!(out, "  flagged after   min {a_min}  median {a_med}  max {a_max}").unwrap();
    writeln!(
        out,
        "  change          min {c_min:+.2}%  median {c_med:+.2}%  max {c_max:+.2}%"
    )
    .unwrap();

    writeln!(out).unwrap();
    writeln!(out, "seed     before  after  change    verdict").unwrap();
    for it in &report.iterations {
        let seed = match it.seed {
            Some(seed) => seed.to_string(),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{seed:<7}  {:>6}  {:>5}  {:>+7.2}%  {}",
            it.rss_initial,
            it.rss_after,
            it.relative_change,
            verdict_word(it.proposition, it.tie),
        )
        .unwrap();
    }
}

pub fn render_validation(artifact: &ValidationArtifact) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "Refinement validation at node '{}' (alpha {}, train fraction {}, structures {} -> {})",
        artifact.report.node,
        artifact.alpha,
        artifact.train_fraction,
        artifact.before_fingerprint,
        artifact.after_fingerprint,
    )
    .unwrap();
    write_validation_body(&mut out, &artifact.report);
    out
}

pub fn render_confounder(artifact: &ConfounderArtifact) -> String {
    let mut out = String::new();
    let report: &ConfounderReport = &artifact.report;
    writeln!(
        out,
        "Confounder check for new variable '{}' (alpha {}, train fraction {}, structure {})",
        report.new_node, artifact.alpha, artifact.train_fraction, artifact.structure_fingerprint,
    )
    .unwrap();
    writeln!(
        out,
        "indicated: {}",
        if report.indicated { "yes — both causal directions validate" } else { "no" },
    )
    .unwrap();
    writeln!(out).unwrap();
    writeln!(out, "-- as direct cause of '{}' --", report.child_report.node).unwrap();
    write_validation_body(&mut out, &report.child_report);
    writeln!(out).unwrap();
    writeln!(out, "-- as direct cause of '{}' --", report.parent_report.node).unwrap();
    write_validation_body(&mut out, &report.parent_report);
    out
}
