//! CSV writers for run results, experiment reports and plot data.

use std::io::Write;

use super::experiment::{ExperimentReport, MethodCurve, QueryOutcome};
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Internal(format!("writing csv: {e}"))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per query:
/// `query,final_best,combined_best,final_correct,combined_correct`, then
/// `tier{t}_selected` for every tier, then `tier{t}_ms` for every tier.
/// Combined columns are empty when the combined decision is disabled.
pub fn write_results_csv<W: Write>(out: W, outcomes: &[QueryOutcome]) -> Result<()> {
    let tiers = outcomes.first().map_or(0, |o| o.selected_sizes.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["query", "final_best", "combined_best", "final_correct", "combined_correct"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=tiers).map(|t| format!("tier{t}_selected")));
    header.extend((1..=tiers).map(|t| format!("tier{t}_ms")));
    w.write_record(&header).map_err(csv_err)?;
    for o in outcomes {
        let mut row = vec![
            o.query.to_string(),
            o.final_best.to_string(),
            opt(o.combined_best),
            o.final_correct.to_string(),
            opt(o.combined_correct),
        ];
        row.extend(o.selected_sizes.iter().map(|s| s.to_string()));
        row.extend(o.tier_ms.iter().map(|ms| format!("{ms:.3}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Internal(format!("writing csv: {e}")))
}

/// Columns `experiment,schedule,kind,tier,method,recall_at_1,mean_seconds_per_frame`.
/// Each report contributes a `tier-method` row per (tier, method), a
/// `tier-mean` row per tier, then a `final` and, when enabled, a `combined`
/// summary row.
pub fn write_report_csv<W: Write>(out: W, reports: &[ExperimentReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "experiment",
        "schedule",
        "kind",
        "tier",
        "method",
        "recall_at_1",
        "mean_seconds_per_frame",
    ])
    .map_err(csv_err)?;
    for r in reports {
        let schedule = r.schedule.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        for m in &r.per_method {
            w.write_record([
                r.name.as_str(),
                &schedule,
                "tier-method",
                &m.tier.to_string(),
                &m.method,
                &m.recall_at_1.to_string(),
                "",
            ])
            .map_err(csv_err)?;
        }
        for t in &r.per_tier {
            w.write_record([
                r.name.as_str(),
                &schedule,
                "tier-mean",
                &t.tier.to_string(),
                "",
                &t.recall_at_1.to_string(),
                "",
            ])
            .map_err(csv_err)?;
        }
        let secs = r.mean_seconds_per_frame.to_string();
        w.write_record([
            r.name.as_str(),
            &schedule,
            "final",
            &r.schedule.len().to_string(),
            "",
            &r.final_recall_at_1.to_string(),
            &secs,
        ])
        .map_err(csv_err)?;
        if let Some(c) = r.combined_recall_at_1 {
            w.write_record([r.name.as_str(), &schedule, "combined", "", "", &c.to_string(), &secs])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Internal(format!("writing csv: {e}")))
}

/// Columns `curve,n,recall,clamped`, one row per point.
pub fn write_plot_data_csv<W: Write>(out: W, curves: &[MethodCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve", "n", "recall", "clamped"]).map_err(csv_err)?;
    for c in curves {
        for (n, r) in c.curve.n_values.iter().zip(&c.curve.recall) {
            w.write_record([c.method.as_str(), &n.to_string(), &r.to_string(), &c.curve.clamped.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Internal(format!("writing csv: {e}")))
}
