//! RMSE computation, per-window evaluation reports and the diagnostic
//! curve formatting.

use crate::data::{PairMap, PairSet};
use crate::error::{Error, Result};
use crate::fitted_q::QDiagnostics;

/// Per-window evaluation result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReport {
    pub window_index: usize,
    pub n_pairs: usize,
    pub rmse: f64,
}

/// Squared residuals over the mask; both maps must cover every masked pair.
fn masked_squared_error(predictions: &PairMap, truth: &PairMap, mask: &PairSet) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut total = 0.0;
    for &(user, item) in mask {
        let p = predictions
            .get(&(user, item))
            .ok_or(Error::MissingKey { user, item })?;
        let t = truth
            .get(&(user, item))
            .ok_or(Error::MissingKey { user, item })?;
        let err = t - p;
        total += err * err;
    }
    Ok(total)
}

/// Root-mean-square error over the masked pairs.
pub fn rmse(predictions: &PairMap, truth: &PairMap, mask: &PairSet) -> Result<f64> {
    Ok((masked_squared_error(predictions, truth, mask)? / mask.len() as f64).sqrt())
}

/// One window's predictions and logged values; the window's observed pairs
/// (the truth keys) form the mask.
pub struct WindowEval<'a> {
    pub window_index: usize,
    pub predictions: &'a PairMap,
    pub truth: &'a PairMap,
}

/// Per-window RMSE plus the pooled RMSE over every pair of every window.
/// Empty windows are skipped; it is an error for all of them to be empty.
pub fn evaluate_windows(windows: &[WindowEval]) -> Result<(Vec<WindowReport>, f64)> {
    let mut reports = Vec::new();
    let mut pooled_sse = 0.0;
    let mut pooled_n = 0usize;
    for window in windows {
        if window.truth.is_empty() {
            continue;
        }
        let mask: PairSet = window.truth.keys().copied().collect();
        let sse = masked_squared_error(window.predictions, window.truth, &mask)?;
        reports.push(WindowReport {
            window_index: window.window_index,
            n_pairs: mask.len(),
            rmse: (sse / mask.len() as f64).sqrt(),
        });
        pooled_sse += sse;
        pooled_n += mask.len();
    }
    if pooled_n == 0 {
        return Err(Error::EmptyData("every evaluation window is empty".into()));
    }
    Ok((reports, (pooled_sse / pooled_n as f64).sqrt()))
}

/// CSV body for the per-window reports: `window,n_pairs,rmse`.
pub fn window_reports_csv(reports: &[WindowReport]) -> String {
    let mut out = String::from("window,n_pairs,rmse\n");
    for report in reports {
        out.push_str(&format!(
            "{},{},{}\n",
            report.window_index, report.n_pairs, report.rmse
        ));
    }
    out
}

/// CSV body of the per-iteration hold-out curve: `iteration,holdout_rmse`.
pub fn iteration_curve(diagnostics: &QDiagnostics) -> String {
    let mut out = String::from("iteration,holdout_rmse\n");
    for row in &diagnostics.iterations {
        out.push_str(&format!("{},{}\n", row.iteration, row.holdout_rmse));
    }
    out
}

/// CSV body of the stability curves: `samples_seen,avg_reward,avg_max_q`.
pub fn stability_curves(diagnostics: &QDiagnostics) -> String {
    let mut out = String::from("samples_seen,avg_reward,avg_max_q\n");
    for row in &diagnostics.checkpoints {
        out.push_str(&format!(
            "{},{},{}\n",
            row.samples_seen, row.avg_reward, row.avg_max_q
        ));
    }
    out
}

/// CSV body of the full diagnostics:
/// `iteration,samples_seen,avg_reward,avg_max_q,holdout_rmse`.
pub fn diagnostics_csv(diagnostics: &QDiagnostics) -> String {
    let mut out = String::from("iteration,samples_seen,avg_reward,avg_max_q,holdout_rmse\n");
    for row in &diagnostics.checkpoints {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.iteration, row.samples_seen, row.avg_reward, row.avg_max_q, row.holdout_rmse
        ));
    }
    out
}
