//! CSV input: `group,x1,...,xm,y[,trials]`.

use std::io::Read;
use std::path::Path;

use isofuse::isotonic::DesignPoint;
use isofuse::likelihood::{Dataset, Observation};

use crate::error::CliError;

/// Parsed input: one dataset per group, in order of first appearance.
#[derive(Debug, Clone)]
pub struct Input {
    pub groups: Vec<String>,
    pub datasets: Vec<Dataset<f64>>,
    pub dim: usize,
    pub has_trials: bool,
}

pub fn ingest_csv(path: &Path) -> Result<Input, CliError> {
    ingest_reader(std::fs::File::open(path)?)
}

pub fn ingest_reader<R: Read>(reader: R) -> Result<Input, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let has_trials = header.last().is_some_and(|h| h == "trials");
    let y_col = header.len().saturating_sub(1 + usize::from(has_trials));
    let bad_header = || CliError::Parse { line: 1, message: "header must be group,x1,...,xm,y[,trials]".into() };
    if header.len() < 3 + usize::from(has_trials) || header[0] != "group" || header[y_col] != "y" {
        return Err(bad_header());
    }
    let dim = y_col - 1;

    let mut groups: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<Observation<f64>>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(CliError::Parse { line, message: format!("expected {} fields, found {}", header.len(), record.len()) });
        }
        let label = &record[0];
        if label.is_empty() {
            return Err(CliError::EmptyGroup { line });
        }
        let num = |col: usize| -> Result<f64, CliError> {
            let v: f64 = record[col]
                .parse()
                .map_err(|_| CliError::Parse { line, message: format!("'{}' in column {} is not a number", &record[col], header[col]) })?;
            if !v.is_finite() {
                return Err(CliError::Parse { line, message: format!("non-finite value in column {}", header[col]) });
            }
            Ok(v)
        };
        let coords = (1..=dim).map(num).collect::<Result<Vec<_>, _>>()?;
        let point = DesignPoint::new(coords).map_err(|e| CliError::Parse { line, message: e.to_string() })?;
        let y = num(y_col)?;
        let obs = if has_trials {
            let trials: u64 = record[y_col + 1]
                .parse()
                .map_err(|_| CliError::Parse { line, message: format!("trials '{}' is not a non-negative integer", &record[y_col + 1]) })?;
            if trials == 0 {
                return Err(CliError::Range { line, message: "trials must be positive".into() });
            }
            if !(0.0..=trials as f64).contains(&y) {
                return Err(CliError::Range { line, message: format!("y = {y} outside [0, {trials}]") });
            }
            Observation::binomial(point, y, trials)
        } else {
            Observation::new(point, y)
        };
        let k = match groups.iter().position(|g| g == label) {
            Some(k) => k,
            None => {
                groups.push(label.to_string());
                rows.push(Vec::new());
                groups.len() - 1
            }
        };
        rows[k].push(obs);
    }
    if groups.is_empty() {
        return Err(CliError::Parse { line: 2, message: "no data rows".into() });
    }
    let datasets = rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| Dataset::new(k, r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Input { groups, datasets, dim, has_trials })
}
