//! Report sinks: JSON lines (default) or CSV with a stable column
//! order. Every stream starts with an echo of the resolved
//! configuration, so replaying the echoed command reproduces the
//! stream byte for byte.
//!
//! CSV streams hold one record shape; records with a different shape
//! (summaries, fit results) appear as `#`-prefixed comment lines so
//! the column grid stays rectangular.

use anyhow::Result;
use std::io::Write;
use sumprod_core::report::{csv_f64, Verdict};

#[derive(Clone, Copy, PartialEq, Eq, Debug, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Column order for verdict rows in CSV mode.
const VERDICT_COLUMNS: [&str; 10] = [
    "statement_id",
    "field",
    "inputs",
    "lhs",
    "rhs_asserted",
    "rhs_logged",
    "margin",
    "holds",
    "vacuous",
    "seed",
];

fn csv_escape(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

pub struct Reporter {
    format: Format,
    out: Box<dyn Write>,
    csv_columns: Option<Vec<String>>,
    pub records: usize,
    pub asserted_failures: usize,
    pub logged_violations: usize,
}

impl Reporter {
    pub fn new(format: Format, out: Box<dyn Write>) -> Reporter {
        Reporter {
            format,
            out,
            csv_columns: None,
            records: 0,
            asserted_failures: 0,
            logged_violations: 0,
        }
    }

    /// Echo of the resolved run configuration, emitted first.
    pub fn config(&mut self, config: serde_json::Value) -> Result<()> {
        match self.format {
            Format::Json => {
                let mut rec = serde_json::Map::new();
                rec.insert("type".into(), "config".into());
                rec.insert("config".into(), config);
                writeln!(self.out, "{}", serde_json::Value::Object(rec))?;
            }
            Format::Csv => {
                writeln!(self.out, "# config: {config}")?;
            }
        }
        Ok(())
    }

    fn csv_row(&mut self, columns: &[&str], cells: Vec<String>) -> Result<()> {
        if self.csv_columns.is_none() {
            let header: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
            writeln!(self.out, "{}", header.join(","))?;
            self.csv_columns = Some(header);
        }
        let row: Vec<String> = cells.iter().map(|c| csv_escape(c)).collect();
        writeln!(self.out, "{}", row.join(","))?;
        Ok(())
    }

    pub fn verdict(&mut self, v: &Verdict) -> Result<()> {
        self.records += 1;
        if !v.holds {
            self.asserted_failures += 1;
        }
        if v.logged_violated() {
            self.logged_violations += 1;
        }
        match self.format {
            Format::Json => {
                let mut rec = serde_json::to_value(v)?;
                let obj = rec.as_object_mut().expect("verdict object");
                obj.insert("type".into(), "verdict".into());
                writeln!(self.out, "{rec}")?;
            }
            Format::Csv => {
                let cells = vec![
                    v.statement_id.clone(),
                    v.field.clone(),
                    v.inputs.to_string(),
                    csv_f64(v.lhs),
                    csv_f64(v.rhs_asserted),
                    v.rhs_logged.map(csv_f64).unwrap_or_default(),
                    csv_f64(v.margin),
                    v.holds.to_string(),
                    v.vacuous.to_string(),
                    v.seed.map(|s| s.to_string()).unwrap_or_default(),
                ];
                self.csv_row(&VERDICT_COLUMNS, cells)?;
            }
        }
        Ok(())
    }

    /// A non-verdict record (counts, searches, scan rows). In CSV mode
    /// the given columns fix the header; a record whose shape differs
    /// from the established header lands on a comment line.
    pub fn record(&mut self, kind: &str, columns: &[&str], value: serde_json::Value) -> Result<()> {
        self.records += 1;
        match self.format {
            Format::Json => {
                let mut rec = serde_json::Map::new();
                rec.insert("type".into(), kind.into());
                if let serde_json::Value::Object(m) = value {
                    rec.extend(m);
                }
                writeln!(self.out, "{}", serde_json::Value::Object(rec))?;
            }
            Format::Csv => {
                let mismatched = self.csv_columns.as_ref().is_some_and(|have| {
                    have.iter().map(String::as_str).ne(columns.iter().copied())
                });
                if mismatched {
                    writeln!(self.out, "# {kind}: {value}")?;
                    return Ok(());
                }
                let cells: Vec<String> = columns
                    .iter()
                    .map(|c| {
                        // Dotted columns reach into nested objects.
                        let found = c.split('.').try_fold(&value, |v, key| v.get(key));
                        match found {
                            Some(serde_json::Value::Number(n)) => match n.as_f64() {
                                Some(x) if !n.is_i64() && !n.is_u64() => csv_f64(x),
                                _ => n.to_string(),
                            },
                            Some(serde_json::Value::String(s)) => s.clone(),
                            Some(v) => v.to_string(),
                            None => String::new(),
                        }
                    })
                    .collect();
                self.csv_row(columns, cells)?;
            }
        }
        Ok(())
    }

    /// Marks an asserted failure coming from a non-verdict record.
    pub fn note_failure(&mut self) {
        self.asserted_failures += 1;
    }

    /// Writes the summary and returns the exit code: 0 when every
    /// asserted verdict held.
    pub fn finish(mut self) -> Result<i32> {
        let summary = serde_json::json!({
            "records": self.records,
            "asserted_failures": self.asserted_failures,
            "logged_violations": self.logged_violations,
        });
        match self.format {
            Format::Json => {
                writeln!(
                    self.out,
                    "{}",
                    serde_json::json!({"type": "summary", "summary": summary})
                )?;
            }
            Format::Csv => {
                writeln!(self.out, "# summary: {summary}")?;
            }
        }
        self.out.flush()?;
        eprintln!(
            "{} records, {} asserted failures, {} logged-bound violations",
            self.records, self.asserted_failures, self.logged_violations
        );
        Ok(if self.asserted_failures == 0 { 0 } else { 1 })
    }
}
