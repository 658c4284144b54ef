//! CSV datasets and JSON reports.
//!
//! Dataset files have the header `time,status,z1,...,zd` (covariate names
//! are free) and one row per subject. **`status` is 1 for an observed event
//! and 0 for a censored time.** Floats are written in the shortest form that
//! parses back to the identical value, so write-then-read is lossless.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

fn csv_error(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<SurvivalDataset> {
    read_csv_from(File::open(path)?)
}

pub fn read_csv_from(reader: impl Read) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(1, e.to_string()))?,
        None => return Err(csv_error(1, "missing header")),
    };
    if header.len() < 2 || &header[0] != "time" || &header[1] != "status" {
        return Err(csv_error(1, "header must start with 'time,status'"));
    }
    let dim = header.len() - 2;
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut covariates = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != dim + 2 {
            return Err(csv_error(
                line,
                format!("expected {} fields, found {}", dim + 2, record.len()),
            ));
        }
        let parse = |k: usize| -> Result<f64> {
            record[k].parse::<f64>().map_err(|_| {
                csv_error(line, format!("field {} is not a number: '{}'", k + 1, &record[k]))
            })
        };
        let time = parse(0)?;
        if !(time.is_finite() && time >= 0.0) {
            return Err(csv_error(line, format!("time must be finite and nonnegative, got {time}")));
        }
        let event = match &record[1] {
            "1" => true,
            "0" => false,
            other => return Err(csv_error(line, format!("status must be 0 or 1, got '{other}'"))),
        };
        times.push(time);
        events.push(event);
        for k in 2..dim + 2 {
            let z = parse(k)?;
            if !z.is_finite() {
                return Err(csv_error(line, format!("covariate {} is not finite", k - 1)));
            }
            covariates.push(z);
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyData);
    }
    SurvivalDataset::from_columns(times, events, covariates, dim)?.with_names(names)
}

pub fn write_csv(data: &SurvivalDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(data, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to(data: &SurvivalDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header = vec!["time".to_string(), "status".to_string()];
    match data.names() {
        Some(names) => header.extend(names.iter().cloned()),
        None => header.extend((1..=data.dim()).map(|k| format!("z{k}"))),
    }
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(to_io)?;
    let mut row = Vec::with_capacity(data.dim() + 2);
    for (t, event, z) in data.iter() {
        row.clear();
        row.push(format!("{t:?}"));
        row.push(if event { "1" } else { "0" }.to_string());
        row.extend(z.iter().map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Top-level JSON report of a command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    /// Echo of every resolved input.
    pub params: Value,
    pub results: Value,
    pub version: String,
}

impl Report {
    pub fn new(command: impl Into<String>, seed: u64, params: Value, results: Value) -> Self {
        Self {
            command: command.into(),
            seed,
            params,
            results,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Writes the report to `path`, or to standard output when `path` is `None`.
pub fn emit_report(report: &Report, path: Option<&Path>) -> Result<()> {
    let json = report.to_json()?;
    match path {
        Some(p) => std::fs::write(p, json)?,
        None => std::io::stdout().lock().write_all(json.as_bytes())?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let d = read_csv_from("time,status,z1\n1.0,1,0.5\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.dim(), 1);
        assert!(d.event(0));
        assert_eq!(d.covariates(0), &[0.5]);
    }

    #[test]
    fn short_row_reports_line() {
        let err = read_csv_from("time,status,z1\n1.0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 2, .. }), "{err}");
    }

    #[test]
    fn bad_status_and_negative_time() {
        let err = read_csv_from("time,status,z1\n1.0,1,0\n1.0,2,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }));
        let err = read_csv_from("time,status\n-1.0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 2, .. }));
        assert!(read_csv_from("t,s\n1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn report_floats_parse_back() {
        let x = 0.1 + 0.2;
        let r = Report::new("evaluate", 7, serde_json::json!({}), serde_json::json!({ "wrss": x }));
        let back: Report = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.results["wrss"].as_f64().unwrap(), x);
        assert_eq!(back, r);
    }
}
