//! Plain-text renderings of evaluation and ranking results.

use std::fmt::Write;

use crate::evaluation::{CVReport, Comparison};
use crate::metrics::{per_class_metrics, ConfusionMatrix};
use crate::ranking::{ImportanceEntry, ImportanceTable, RankingReport};

/// Confusion matrix with row sums and recall on the right, column sums,
/// precision and F1 underneath, and overall accuracy.
pub fn render_confusion(cm: &ConfusionMatrix, truth_name: &str, pred_name: &str) -> String {
    let metrics = per_class_metrics(cm);
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    let total = cm.total();
    let w = 8;
    let mut out = String::new();
    let _ = writeln!(out, "{:<16}{pred_name}", "");
    let _ = write!(out, "{:<16}", "");
    for c in &cm.classes {
        let _ = write!(out, "{c:>w$}");
    }
    let _ = writeln!(out, "{:>w$}{:>w$}", "Sum", "Recall");
    for (i, c) in cm.classes.iter().enumerate() {
        let head = if i == 0 { truth_name } else { "" };
        let _ = write!(out, "{head:<14}{c:>2}");
        for v in &cm.counts[i] {
            let _ = write!(out, "{v:>w$}");
        }
        let _ = writeln!(out, "{:>w$}{:>w$.2}", rows[i], metrics[c].recall);
    }
    let _ = write!(out, "{:<14}{:>2}", "", "Sum");
    for v in &cols {
        let _ = write!(out, "{v:>w$}");
    }
    let _ = writeln!(out, "{total:>w$}{:>w$}", "-");
    let _ = write!(out, "{:<16}", "Precision");
    for c in &cm.classes {
        let _ = write!(out, "{:>w$.2}", metrics[c].precision);
    }
    let accuracy = if total > 0 { cm.trace() as f64 / total as f64 } else { f64::NAN };
    let _ = writeln!(out, "{:>w$}  Accuracy: {:.1}%", "-", 100.0 * accuracy);
    let _ = write!(out, "{:<16}", "F1 Score");
    for c in &cm.classes {
        let _ = write!(out, "{:>w$.2}", metrics[c].f1);
    }
    let _ = writeln!(out, "{:>w$}", "-");
    out
}

fn comparison_line(name: &str, c: &Comparison) -> String {
    match c {
        Comparison::Test(r) => format!(
            "{name}: mean difference {:+.4}, t = {:.3}, df = {}, p = {:.3e}{}",
            r.mean_difference,
            r.t,
            r.df,
            r.p,
            if r.significant(0.05) { " *" } else { "" }
        ),
        Comparison::Unavailable(why) => format!("{name}: not computed ({why})"),
    }
}

/// Accuracy and averaged F1 (mean ± sd over folds) for self ratings and
/// the model, one column pair per report.
pub fn render_summary(reports: &[(&str, &CVReport)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<14}", "Models");
    for (name, _) in reports {
        let _ = write!(out, "{:<34}", format!("{name}"));
    }
    out.push('\n');
    let _ = write!(out, "{:<14}", "");
    for _ in reports {
        let _ = write!(out, "{:<17}{:<17}", "Accuracy", "Averaged F1");
    }
    out.push('\n');
    let row = |label: &str, pick: &dyn Fn(&CVReport) -> ((f64, f64), (f64, f64))| {
        let mut s = format!("{label:<14}");
        for (_, r) in reports {
            let ((am, asd), (fm, fsd)) = pick(r);
            s.push_str(&format!("{:<17}{:<17}", format!("{:.1}±{:.1}%", 100.0 * am, 100.0 * asd), format!("{fm:.2}±{fsd:.2}")));
        }
        s.push('\n');
        s
    };
    out.push_str(&row("Participant", &|r| {
        (r.self_assessment.per_fold_accuracy_mean_sd, r.self_assessment.per_fold_macro_f1_mean_sd)
    }));
    out.push_str(&row("SVM", &|r| (r.per_fold_accuracy_mean_sd, r.per_fold_macro_f1_mean_sd)));
    out
}

/// Full text rendering of one evaluation report.
pub fn render_cv_report(report: &CVReport, title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "generated by {}", report.generator);
    let grid: Vec<String> = report.grid.iter().map(|c| format!("{c:e}")).collect();
    let _ = writeln!(out, "C grid: {}", grid.join(" "));
    let _ = writeln!(out, "classes: {:?}", report.classes);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12}{:>10}{:>6}{:>10}{:>10}{:>10}{:>10}", "held out", "C", "n", "accuracy", "macro F1", "self acc", "self F1");
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{:<12}{:>10.0e}{:>6}{:>10.3}{:>10.3}{:>10.3}{:>10.3}{}",
            f.held_out_participant.as_str(),
            f.chosen_c,
            f.n_test,
            f.accuracy,
            f.macro_f1,
            f.self_accuracy,
            f.self_macro_f1,
            if f.converged { "" } else { "  (not converged)" }
        );
    }
    for s in &report.skipped {
        let _ = writeln!(out, "{:<12}skipped: {}", s.participant.as_str(), s.reason);
    }
    let _ = writeln!(out);
    out.push_str(&render_summary(&[("", report)]));
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "pooled: accuracy {:.4}, macro F1 {:.4} (self: accuracy {:.4}, macro F1 {:.4})",
        report.overall_accuracy,
        report.overall_macro_f1,
        report.self_assessment.overall_accuracy,
        report.self_assessment.overall_macro_f1
    );
    let _ = writeln!(out, "{}", comparison_line("accuracy, SVM vs self", &report.accuracy_t_test));
    let _ = writeln!(out, "{}", comparison_line("macro F1, SVM vs self", &report.macro_f1_t_test));
    if report.non_converged_folds > 0 {
        let _ = writeln!(out, "folds with non-converged solves: {}", report.non_converged_folds);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "A) self-assessments versus therapist");
    out.push_str(&render_confusion(&report.self_assessment.pooled_confusion, "Therapist", "Self-assessments"));
    let _ = writeln!(out);
    let _ = writeln!(out, "B) SVM predictions versus therapist");
    out.push_str(&render_confusion(&report.pooled_confusion, "Therapist", "SVM Predictions"));
    out
}

fn importance_block(out: &mut String, heading: &str, entries: &[ImportanceEntry]) {
    let _ = writeln!(out, "{:<6}{:<36}{}", "Rank", heading, "Importance Ranking");
    for (k, e) in entries.iter().enumerate() {
        let _ = writeln!(out, "{:<6}{:<36}{:.1} ± {:.1}", k + 1, e.label, e.mean_rank, e.sd_rank);
    }
}

/// Top features, metrics and descriptors by mean rank.
pub fn render_importance(table: &ImportanceTable, top_n: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "A) top {} features", top_n.min(table.per_feature.len()));
    importance_block(&mut out, "Features", table.top(top_n));
    if !table.per_metric.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "B) metrics");
        importance_block(&mut out, "Metrics", &table.per_metric);
    }
    if !table.per_descriptor.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "C) statistical descriptors");
        importance_block(&mut out, "Statistical Descriptors", &table.per_descriptor);
    }
    out
}

pub fn render_ranking_report(report: &RankingReport, top_n: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Backward feature elimination");
    let _ = writeln!(out, "generated by {}", report.generator);
    let _ = writeln!(out, "folds: {}, features: {}", report.folds.len(), report.importance.n_features);
    for f in &report.folds {
        let _ = writeln!(out, "  {:<10} C = {:e}", f.elimination.fold_participant.as_str(), f.chosen_c);
    }
    for p in &report.skipped {
        let _ = writeln!(out, "  {:<10} skipped", p.as_str());
    }
    let _ = writeln!(out);
    out.push_str(&render_importance(&report.importance, top_n));
    out
}
