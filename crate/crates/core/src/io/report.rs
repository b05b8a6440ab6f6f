//! Line-delimited JSON reports, one record per line. Wall-clock times are
//! left out so identical runs produce identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::pruning::PruneResult;
use crate::training::FitReport;

use super::write_string;

fn push_line<S: Serialize>(out: &mut String, record: &S) {
    let _ = writeln!(out, "{}", serde_json::to_string(record).expect("record serializes"));
}

/// One `epoch` record per completed epoch, then a `summary` record.
pub fn fit_report_lines(report: &FitReport) -> String {
    let mut out = String::new();
    for e in &report.epochs {
        push_line(&mut out, &json!({"record": "epoch", "epoch": e.epoch, "train_loss": e.train_loss, "val_mse": e.val_mse, "lr": e.lr}));
    }
    push_line(
        &mut out,
        &json!({
            "record": "summary",
            "stop_reason": report.stop_reason,
            "epochs": report.epochs.len(),
            "final_validation_mse": report.final_validation_mse,
        }),
    );
    out
}

/// One `restart` record per restart, then a `summary` record carrying the
/// best objective and its square root.
pub fn prune_report_lines<T>(result: &PruneResult<T>) -> String {
    let mut out = String::new();
    for r in &result.restarts {
        push_line(
            &mut out,
            &json!({
                "record": "restart",
                "restart": r.restart,
                "initial_objective": r.initial_objective,
                "final_objective": r.final_objective,
                "sqrt_final_objective": r.final_objective.sqrt(),
                "iterations": r.iterations,
                "stop_reason": r.stop_reason,
                "failed": r.failed,
            }),
        );
    }
    push_line(
        &mut out,
        &json!({
            "record": "summary",
            "best_restart": result.best_restart,
            "objective": result.objective,
            "sqrt_objective": result.sqrt_objective(),
        }),
    );
    out
}

pub fn write_lines(path: &Path, lines: &str) -> Result<()> {
    write_string(path, lines)
}
