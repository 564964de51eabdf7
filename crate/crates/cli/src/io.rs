//! CSV interchange for observation data.
//!
//! Files have a header row and comma-separated fields. The three binary
//! columns hold `0` or `1`; the confounder holds a finite decimal number.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use mednnt_core::{Dataset, ObservationRecord};

use crate::error::CliError;

/// Column names of the four variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Columns {
    pub outcome: String,
    pub exposure: String,
    pub mediator: String,
    pub confounder: String,
}

impl Default for Columns {
    fn default() -> Self {
        Self {
            outcome: "I".into(),
            exposure: "A".into(),
            mediator: "M".into(),
            confounder: "L".into(),
        }
    }
}

pub fn read_dataset(path: &Path, columns: &Columns) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|source| CliError::FileNotFound {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(file, columns)
}

/// Parses CSV data. Row numbers in errors count data rows from 1.
pub fn parse_dataset<R: Read>(reader: R, columns: &Columns) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn(name.to_string()))
    };
    let idx = [
        find(&columns.outcome)?,
        find(&columns.exposure)?,
        find(&columns.mediator)?,
        find(&columns.confounder)?,
    ];
    let names = [
        &columns.outcome,
        &columns.exposure,
        &columns.mediator,
        &columns.confounder,
    ];

    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let field = |c: usize| row.get(idx[c]).unwrap_or("");
        let parse_error = |c: usize, message: String| CliError::Parse {
            row: k + 1,
            column: names[c].clone(),
            message,
        };
        let mut bits = [false; 3];
        for (c, bit) in bits.iter_mut().enumerate() {
            *bit = match field(c) {
                "0" => false,
                "1" => true,
                other => return Err(parse_error(c, format!("expected 0 or 1, got `{other}`"))),
            };
        }
        let l = field(3)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| {
                parse_error(3, format!("expected a finite number, got `{}`", field(3)))
            })?;
        records.push(ObservationRecord::new(bits[0], bits[1], bits[2], l));
    }
    Ok(Dataset::new(records)?)
}

/// Writes records so that reading them back reproduces every value exactly.
pub fn write_dataset<W: Write>(
    writer: W,
    data: &Dataset,
    columns: &Columns,
) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        &columns.outcome,
        &columns.exposure,
        &columns.mediator,
        &columns.confounder,
    ])?;
    let bit = |b: bool| if b { "1" } else { "0" };
    for r in data.records() {
        wtr.write_record([
            bit(r.outcome),
            bit(r.exposure),
            bit(r.mediator),
            &r.confounder.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
