//! Output files of the `online` command: per-trial JSON lines, a summary
//! CSV with one row per l-value, and the averaged sliding-window series.
//!
//! CSV files start with `# key = value` comment lines echoing every setting
//! needed to reproduce them.

use std::io::Write;

use forcecheck_core::metrics::{MeanWindowPoint, SummaryRow, TimeModel};
use forcecheck_core::online::{RunReport, TrialRecord};
use serde::Serialize;

use crate::error::{CliError, Result};

pub const UNDEFINED: &str = "undefined";

pub const SUMMARY_COLUMNS: [&str; 18] = [
    "l_value",
    "runs",
    "samples",
    "dataset_size",
    "verifications",
    "precision",
    "recall",
    "pooled_precision",
    "pooled_recall",
    "undefined_precision_runs",
    "undefined_recall_runs",
    "tp",
    "fp",
    "tn",
    "fn",
    "uncertain",
    "total_seconds",
    "saved_seconds",
];

pub const WINDOW_COLUMNS: [&str; 5] = [
    "l_value",
    "index",
    "precision",
    "uncertain_fraction",
    "cycle_time",
];

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Data(format!("writing CSV: {e}"))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(format!("writing output: {e}"))
}

/// Writes `# key = value` lines.
pub fn write_echo<W: Write>(out: &mut W, echo: &[(String, String)]) -> Result<()> {
    for (k, v) in echo {
        writeln!(out, "# {k} = {v}").map_err(io_err)?;
    }
    Ok(())
}

pub(crate) fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

#[derive(Serialize)]
struct RecordLine<'a> {
    l_value: f64,
    run: usize,
    rng_seed: u64,
    position: usize,
    #[serde(flatten)]
    record: &'a TrialRecord,
}

/// One JSON object per trial, runs in order.
pub fn write_records<W: Write>(out: &mut W, reports: &[RunReport]) -> Result<()> {
    for report in reports {
        for (position, record) in report.records.iter().enumerate() {
            let line = RecordLine {
                l_value: report.config.l_value,
                run: report.run,
                rng_seed: report.rng_seed,
                position,
                record,
            };
            serde_json::to_writer(&mut *out, &line)
                .map_err(|e| CliError::Data(format!("writing JSON: {e}")))?;
            out.write_all(b"\n").map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(
    mut out: W,
    echo: &[(String, String)],
    rows: &[SummaryRow],
    tm: &TimeModel,
) -> Result<()> {
    write_echo(&mut out, echo)?;
    let mut w = csv_writer(out);
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.l_value.to_string(),
            r.runs.to_string(),
            r.samples.to_string(),
            r.dataset_size.to_string(),
            r.verifications.to_string(),
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            fmt_opt(r.pooled_precision),
            fmt_opt(r.pooled_recall),
            r.undefined_precision_runs.to_string(),
            r.undefined_recall_runs.to_string(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.tn.to_string(),
            r.fn_.to_string(),
            r.uncertain.to_string(),
            tm.total(r.samples, r.verifications).to_string(),
            tm.savings(r.samples, r.verifications).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_windows<W: Write>(
    mut out: W,
    echo: &[(String, String)],
    series: &[(f64, Vec<MeanWindowPoint>)],
) -> Result<()> {
    write_echo(&mut out, echo)?;
    let mut w = csv_writer(out);
    w.write_record(WINDOW_COLUMNS).map_err(csv_err)?;
    for (l_value, points) in series {
        for p in points {
            w.write_record([
                l_value.to_string(),
                p.index.to_string(),
                fmt_opt(p.precision),
                p.uncertain_fraction.to_string(),
                p.cycle_time.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use forcecheck_core::online::Phase;
    use forcecheck_core::{Decision, Label};

    #[test]
    fn record_lines_are_flat_json() {
        let report = RunReport {
            run: 2,
            rng_seed: 9,
            config: Default::default(),
            final_dataset_size: 1,
            records: vec![TrialRecord {
                trial_id: "17".into(),
                decision: Decision::Uncertain,
                verified: true,
                predicted: Label::Negative,
                truth: Label::Negative,
                phase: Phase::Seed,
            }],
        };
        let mut out = Vec::new();
        write_records(&mut out, &[report]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"l_value\":100.0,\"run\":2,\"rng_seed\":9,\"position\":0,\"trial_id\":\"17\",\
             \"decision\":\"uncertain\",\"verified\":true,\"predicted\":\"negative\",\
             \"truth\":\"negative\",\"phase\":\"seed\"}\n"
        );
    }

    #[test]
    fn undefined_values_are_marked() {
        assert_eq!(fmt_opt(None), "undefined");
        assert_eq!(fmt_opt(Some(0.5)), "0.5");
        let mut out = Vec::new();
        write_windows(
            &mut out,
            &[("k".into(), "11".into())],
            &[(
                100.0,
                vec![MeanWindowPoint {
                    index: 99,
                    precision: None,
                    uncertain_fraction: 1.0,
                    cycle_time: 45.0,
                }],
            )],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "# k = 11\nl_value,index,precision,uncertain_fraction,cycle_time\n100,99,undefined,1,45\n"
        );
    }
}
