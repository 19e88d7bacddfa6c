//! CSV input and output. Files carry `time,status,<covariates...>` with a
//! header row; status 1 marks an observed event.

use std::collections::BTreeSet;
use std::path::Path;

use dnbcure::simulation::SimulatedData;
use dnbcure::{Dataset, Subject};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Which columns enter each link. The p-link always gets an implicit
/// intercept; the η-link never does. Columns named in `eta_factors` expand
/// to one indicator per observed level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub p_covariates: Vec<String>,
    pub eta_covariates: Vec<String>,
    #[serde(default)]
    pub eta_factors: Vec<String>,
}

/// Parsed data plus the labels of the flat parameter layout.
#[derive(Debug, Clone)]
pub struct Design {
    pub data: Dataset,
    pub beta1_labels: Vec<String>,
    pub beta2_labels: Vec<String>,
}

impl Design {
    pub fn parameter_labels(&self) -> Vec<String> {
        let mut labels = vec!["phi".to_string()];
        labels.extend(self.beta1_labels.iter().map(|l| format!("beta1[{l}]")));
        labels.extend(self.beta2_labels.iter().map(|l| format!("beta2[{l}]")));
        labels.push("gamma1".into());
        labels.push("gamma2".into());
        labels
    }
}

struct Table {
    headers: Vec<String>,
    /// Records paired with their 1-based line number in the file.
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn column(&self, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("missing column `{name}`")))
    }
}

fn read_table(path: &Path) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table { headers, rows })
}

fn csv_error(path: &Path, err: csv::Error) -> CliError {
    match err.kind() {
        csv::ErrorKind::Io(_) => CliError::io(path, err),
        _ => CliError::Data(err.to_string()),
    }
}

fn parse_number(line: u64, column: &str, raw: &str) -> CliResult<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            CliError::Data(format!(
                "line {line}: `{column}` is not a finite number: `{raw}`"
            ))
        })
}

/// Levels of a factor column, ordered numerically when every level parses
/// as a number and lexically otherwise.
fn factor_levels(table: &Table, col: usize) -> Vec<String> {
    let levels: BTreeSet<&str> = table.rows.iter().map(|(_, r)| r[col].as_str()).collect();
    let mut levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(levels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        levels = paired.into_iter().map(|(_, l)| l).collect();
    }
    levels
}

enum EtaColumn {
    Numeric {
        col: usize,
        name: String,
    },
    Factor {
        col: usize,
        name: String,
        levels: Vec<String>,
    },
}

pub fn read_design(path: &Path, spec: &DesignSpec) -> CliResult<Design> {
    let table = read_table(path)?;
    if table.rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let time_col = table.column("time")?;
    let status_col = table.column("status")?;
    for factor in &spec.eta_factors {
        if !spec.eta_covariates.contains(factor) {
            return Err(CliError::Usage(format!(
                "factor `{factor}` is not among the eta covariates"
            )));
        }
    }
    if spec.eta_covariates.is_empty() {
        return Err(CliError::Usage(
            "at least one eta covariate is required".into(),
        ));
    }
    let p_cols = spec
        .p_covariates
        .iter()
        .map(|name| table.column(name))
        .collect::<CliResult<Vec<_>>>()?;
    let eta_cols = spec
        .eta_covariates
        .iter()
        .map(|name| {
            let col = table.column(name)?;
            Ok(if spec.eta_factors.contains(name) {
                EtaColumn::Factor {
                    col,
                    name: name.clone(),
                    levels: factor_levels(&table, col),
                }
            } else {
                EtaColumn::Numeric {
                    col,
                    name: name.clone(),
                }
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut subjects = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let line = *line;
        let time = parse_number(line, "time", &row[time_col])?;
        if time <= 0.0 {
            return Err(CliError::Data(format!(
                "line {line}: time must be > 0, got {time}"
            )));
        }
        let event = match row[status_col].parse::<f64>() {
            Ok(1.0) => true,
            Ok(0.0) => false,
            _ => {
                return Err(CliError::Data(format!(
                    "line {line}: status must be 0 or 1, got `{}`",
                    row[status_col]
                )))
            }
        };
        let mut x_p = vec![1.0];
        for (&col, name) in p_cols.iter().zip(&spec.p_covariates) {
            x_p.push(parse_number(line, name, &row[col])?);
        }
        let mut x_eta = Vec::new();
        for column in &eta_cols {
            match column {
                EtaColumn::Numeric { col, name } => {
                    x_eta.push(parse_number(line, name, &row[*col])?)
                }
                EtaColumn::Factor { col, levels, .. } => {
                    x_eta.extend(levels.iter().map(|l| f64::from(u8::from(*l == row[*col]))))
                }
            }
        }
        subjects.push(Subject::new(time, event, x_p, x_eta));
    }

    let mut beta1_labels = vec!["(intercept)".to_string()];
    beta1_labels.extend(spec.p_covariates.iter().cloned());
    let beta2_labels = eta_cols
        .iter()
        .flat_map(|c| match c {
            EtaColumn::Numeric { name, .. } => vec![name.clone()],
            EtaColumn::Factor { name, levels, .. } => {
                levels.iter().map(|l| format!("{name}:{l}")).collect()
            }
        })
        .collect();
    Ok(Design {
        data: Dataset::new(subjects)?,
        beta1_labels,
        beta2_labels,
    })
}

/// Write a simulated dataset as `time,status,ulcer,thickness`.
pub fn write_simulated(path: &Path, sim: &SimulatedData) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    writer
        .write_record(["time", "status", "ulcer", "thickness"])
        .map_err(io)?;
    for (s, c) in sim.data.subjects().iter().zip(&sim.covariates) {
        writer
            .write_record([
                s.time.to_string(),
                u8::from(s.event).to_string(),
                u8::from(c.ulcer).to_string(),
                c.thickness.to_string(),
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}
