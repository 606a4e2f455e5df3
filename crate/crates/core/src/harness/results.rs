use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One (trial, checkpoint) observation.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub problem: String,
    pub solver: String,
    pub macrorep: u64,
    pub seed: u64,
    /// Budget fraction of the checkpoint.
    pub fraction: f64,
    /// Cost spent by the checkpoint.
    pub cost: f64,
    /// Post-hoc objective of the incumbent at the checkpoint.
    pub objective: f64,
    /// Best post-hoc objective among recommendations so far, including x0.
    pub best_objective: f64,
    pub x0_objective: f64,
    pub x: Vec<f64>,
}

// Flat CSV layout; coordinates are `;`-separated.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    problem: String,
    solver: String,
    macrorep: u64,
    seed: u64,
    fraction: f64,
    cost: f64,
    objective: f64,
    best_objective: f64,
    x0_objective: f64,
    x: String,
}

impl From<&TrialRow> for CsvRow {
    fn from(r: &TrialRow) -> Self {
        CsvRow {
            problem: r.problem.clone(),
            solver: r.solver.clone(),
            macrorep: r.macrorep,
            seed: r.seed,
            fraction: r.fraction,
            cost: r.cost,
            objective: r.objective,
            best_objective: r.best_objective,
            x0_objective: r.x0_objective,
            x: r.x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
        }
    }
}

impl TryFrom<CsvRow> for TrialRow {
    type Error = HarnessError;

    fn try_from(r: CsvRow) -> Result<Self, HarnessError> {
        let x = r
            .x
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| HarnessError::Config(format!("bad coordinate `{s}`"))))
            .collect::<Result<_, _>>()?;
        Ok(TrialRow {
            problem: r.problem,
            solver: r.solver,
            macrorep: r.macrorep,
            seed: r.seed,
            fraction: r.fraction,
            cost: r.cost,
            objective: r.objective,
            best_objective: r.best_objective,
            x0_objective: r.x0_objective,
            x,
        })
    }
}

pub(crate) fn to_csv_bytes(rows: &[TrialRow]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow::from(r))?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

pub fn write_results(rows: &[TrialRow], path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, to_csv_bytes(rows)?)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<TrialRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<CsvRow>()
        .map(|row| TrialRow::try_from(row?))
        .collect()
}
