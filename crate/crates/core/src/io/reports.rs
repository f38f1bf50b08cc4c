//! Report emission: loss curves, evaluation reports, vigilance tables, and
//! ablation tables, as CSV plus an aligned human-readable text rendering.

use std::path::Path;

use crate::eval::{AblationTable, EvalReport};
use crate::signal::ClassLabel;
use crate::train::{LossRecord, VigilanceFold};

use super::{atomic_write, IoError};

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Loss curve CSV: step,epoch,lr,loss_total,loss_det,loss_cls.
pub fn write_loss_curve(path: &Path, records: &[LossRecord]) -> Result<(), IoError> {
    let mut out = String::from("step,epoch,lr,loss_total,loss_det,loss_cls\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:e},{:.6},{:.6},{:.6}\n",
            r.step, r.epoch, r.lr, r.loss_total, r.loss_det, r.loss_cls
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Per-trial rows plus mean/std summary rows.
pub fn write_eval_report(path: &Path, report: &EvalReport) -> Result<(), IoError> {
    let mut out = String::from(
        "row,k_shot,acc_non_drowsy,acc_drowsy,acc_non_driving,macro_f1\n",
    );
    for (i, t) in report.trials.iter().enumerate() {
        out.push_str(&format!(
            "trial{},{},{},{},{},{}\n",
            i + 1,
            report.k_shot,
            fmt_opt(t.accuracy(ClassLabel::NonDrowsy)),
            fmt_opt(t.accuracy(ClassLabel::Drowsy)),
            fmt_opt(t.accuracy(ClassLabel::NonDriving)),
            fmt_opt(t.macro_f1),
        ));
    }
    out.push_str(&format!(
        "mean,{},{},{},{},{}\n",
        report.k_shot,
        fmt_opt(report.mean_accuracy[0]),
        fmt_opt(report.mean_accuracy[1]),
        fmt_opt(report.mean_accuracy[2]),
        fmt_opt(report.mean_macro_f1),
    ));
    out.push_str(&format!(
        "std,{},{},{},{},{}\n",
        report.k_shot,
        fmt_opt(report.std_accuracy[0]),
        fmt_opt(report.std_accuracy[1]),
        fmt_opt(report.std_accuracy[2]),
        fmt_opt(report.std_macro_f1),
    ));
    out.push_str(&format!("# {}\n", report.config_echo));
    atomic_write(path, out.as_bytes())
}

/// Vigilance table: one row per (subject, fold) plus per-subject means.
pub fn write_vigilance_report(
    path: &Path,
    per_subject: &[(u32, Vec<VigilanceFold>)],
) -> Result<(), IoError> {
    let mut out = String::from("subject,fold,pcc,rmse\n");
    for (subject, folds) in per_subject {
        for f in folds {
            out.push_str(&format!(
                "{},{},{},{:.4}\n",
                subject,
                f.fold,
                fmt_opt(f.pcc),
                f.rmse
            ));
        }
        let pccs: Vec<f64> = folds.iter().filter_map(|f| f.pcc).collect();
        let rmses: Vec<f64> = folds.iter().map(|f| f.rmse).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        out.push_str(&format!(
            "{},mean,{},{:.4}\n",
            subject,
            if pccs.is_empty() { String::new() } else { format!("{:.4}", mean(&pccs)) },
            mean(&rmses)
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Ablation table as CSV and as an aligned text rendering next to it.
pub fn write_ablation_table(dir: &Path, slug: &str, table: &AblationTable) -> Result<(), IoError> {
    let mut csv = String::from("k_shot");
    for c in &table.columns {
        csv.push(',');
        csv.push_str(c);
    }
    csv.push('\n');
    for (k, row) in &table.rows {
        csv.push_str(&k.to_string());
        for v in row {
            csv.push(',');
            csv.push_str(&fmt_opt(*v));
        }
        csv.push('\n');
    }
    atomic_write(&dir.join(format!("{slug}.csv")), csv.as_bytes())?;

    let mut widths: Vec<usize> = table.columns.iter().map(|c| c.len().max(6)).collect();
    for (_, row) in &table.rows {
        for (w, v) in widths.iter_mut().zip(row) {
            *w = (*w).max(fmt_opt(*v).len());
        }
    }
    let mut txt = format!("{}\n\n", table.title);
    txt.push_str("k_shot");
    for (c, w) in table.columns.iter().zip(&widths) {
        txt.push_str(&format!("  {c:>w$}"));
    }
    txt.push('\n');
    for (k, row) in &table.rows {
        txt.push_str(&format!("{k:>6}"));
        for (v, w) in row.iter().zip(&widths) {
            txt.push_str(&format!("  {:>w$}", fmt_opt(*v)));
        }
        txt.push('\n');
    }
    atomic_write(&dir.join(format!("{slug}.txt")), txt.as_bytes())
}
