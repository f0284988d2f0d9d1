//! Text dataset format.
//!
//! ```text
//! id,label,n_samples,sample_rate
//! meta,-,1000,500
//! 0,pos,0.01,-0.02,...
//! ```
//!
//! The first line is a fixed header and the second carries the sample count
//! and rate shared by every trial. Each following row is one trial: id,
//! `pos`/`neg`, then exactly `n_samples` force values. Values are written
//! in shortest round-trip decimal form, so reading a written file restores
//! every sample bit for bit.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use forcecheck_core::{ForceTrace, Label, LabeledTrial};

use crate::error::{CliError, Result};

pub const HEADER: [&str; 4] = ["id", "label", "n_samples", "sample_rate"];
const META_TAG: &str = "meta";

/// Writes `trials` to `out`. All traces must share `n_samples` and
/// `sample_rate`; an empty slice produces a header-only file.
pub fn write_dataset<W: Write>(
    out: W,
    trials: &[LabeledTrial],
    n_samples: usize,
    sample_rate: f64,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    w.write_record([
        META_TAG.to_string(),
        "-".to_string(),
        n_samples.to_string(),
        sample_rate.to_string(),
    ])
    .map_err(io)?;
    let mut row: Vec<String> = Vec::with_capacity(n_samples + 2);
    for t in trials {
        if t.trace.len() != n_samples || t.trace.sample_rate() != sample_rate {
            return Err(CliError::Data(format!(
                "trial {} has {} samples at {} Hz, file declares {} at {}",
                t.id,
                t.trace.len(),
                t.trace.sample_rate(),
                n_samples,
                sample_rate
            )));
        }
        row.clear();
        row.push(t.id.clone());
        row.push(t.truth.tag().to_string());
        row.extend(t.trace.samples().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Creates `path` and writes the dataset, refusing to replace an existing
/// file unless `force` is set.
pub fn write_dataset_file(
    path: &Path,
    trials: &[LabeledTrial],
    n_samples: usize,
    sample_rate: f64,
    force: bool,
) -> Result<()> {
    let mut options = OpenOptions::new();
    options.write(true);
    if force {
        options.create(true).truncate(true);
    } else {
        options.create_new(true);
    }
    let file = options.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            CliError::Usage(format!(
                "{} already exists (pass --force to overwrite)",
                path.display()
            ))
        } else {
            CliError::io(path, e)
        }
    })?;
    write_dataset(BufWriter::new(file), trials, n_samples, sample_rate)
}

pub fn read_dataset<R: Read>(input: R, path: &Path) -> Result<Vec<LabeledTrial>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let fail = |line: u64, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records = reader.records();
    let mut next = |expect: &str| -> Result<Option<(u64, csv::StringRecord)>> {
        match records.next() {
            None => Ok(None),
            Some(Ok(r)) => {
                let line = r.position().map_or(0, |p| p.line());
                Ok(Some((line, r)))
            }
            Some(Err(e)) => {
                let line = e.position().map_or(0, |p| p.line());
                Err(fail(line, format!("{expect}: {e}")))
            }
        }
    };

    let (line, header) = next("header")?.ok_or_else(|| fail(1, "empty file".into()))?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(fail(line, format!("expected header {:?}", HEADER.join(","))));
    }
    let (line, meta) =
        next("metadata")?.ok_or_else(|| fail(2, "missing metadata row".into()))?;
    if meta.len() != 4 || &meta[0] != META_TAG {
        return Err(fail(
            line,
            "expected metadata row `meta,-,<n_samples>,<sample_rate>`".into(),
        ));
    }
    let n_samples: usize = meta[2]
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| fail(line, format!("invalid n_samples {:?}", &meta[2])))?;
    let sample_rate: f64 = meta[3]
        .parse()
        .ok()
        .filter(|r: &f64| r.is_finite() && *r > 0.0)
        .ok_or_else(|| fail(line, format!("invalid sample_rate {:?}", &meta[3])))?;

    let mut trials = Vec::new();
    let mut ids = HashSet::new();
    while let Some((line, row)) = next("trial row")? {
        if row.len() != n_samples + 2 {
            return Err(fail(
                line,
                format!("expected {} fields, found {}", n_samples + 2, row.len()),
            ));
        }
        let id = row[0].to_string();
        if id.is_empty() || !ids.insert(id.clone()) {
            return Err(fail(line, format!("missing or duplicate id {id:?}")));
        }
        let truth: Label = match &row[1] {
            "pos" => Label::Positive,
            "neg" => Label::Negative,
            other => return Err(fail(line, format!("label must be pos or neg, got {other:?}"))),
        };
        let samples = row
            .iter()
            .skip(2)
            .enumerate()
            .map(|(i, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| fail(line, format!("sample {i}: invalid value {field:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let trace =
            ForceTrace::new(samples, sample_rate).map_err(|e| fail(line, e.to_string()))?;
        trials.push(LabeledTrial { id, trace, truth });
    }
    Ok(trials)
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<LabeledTrial>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(BufReader::new(file), path)
}
