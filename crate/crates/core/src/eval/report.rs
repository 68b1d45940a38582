use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA: u32 = 1;
pub const NEIGHBOR_METRIC: &str = "ordered pairs, right/down relation must match";
pub const MISSING_DENOMINATOR: &str = "present pieces";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub puzzle_id: String,
    pub solver: String,
    pub rows: usize,
    pub cols: usize,
    pub perturbation: String,
    pub direct_accuracy: f64,
    pub neighbor_accuracy: f64,
    pub wall_time_ms: f64,
}

impl EvalRecord {
    pub fn grid(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }
}

/// Mean and standard error of one (solver, grid, perturbation) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub solver: String,
    pub grid: String,
    pub perturbation: String,
    pub count: usize,
    pub direct_mean: f64,
    pub direct_stderr: f64,
    pub neighbor_mean: f64,
    pub neighbor_stderr: f64,
    pub time_mean_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<EvalRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and standard error (sample std / sqrt(n); 0 for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn grid_key(grid: &str) -> (usize, usize, String) {
    let mut it = grid.split('x').map(|v| v.parse::<usize>().unwrap_or(usize::MAX));
    (it.next().unwrap_or(0), it.next().unwrap_or(0), grid.to_string())
}

impl EvalReport {
    /// Sorts records canonically (puzzle, solver, perturbation) and computes
    /// the aggregates.
    pub fn new(mut records: Vec<EvalRecord>, metadata: BTreeMap<String, String>) -> Self {
        records.sort_by(|a, b| {
            (&a.puzzle_id, &a.solver, &a.perturbation).cmp(&(&b.puzzle_id, &b.solver, &b.perturbation))
        });
        type Cell = (String, (usize, usize, String), String);
        let mut cells: BTreeMap<Cell, Vec<&EvalRecord>> = BTreeMap::new();
        for r in &records {
            cells
                .entry((r.solver.clone(), grid_key(&r.grid()), r.perturbation.clone()))
                .or_default()
                .push(r);
        }
        let aggregates = cells
            .into_iter()
            .map(|((solver, grid, perturbation), rs)| {
                let direct: Vec<f64> = rs.iter().map(|r| r.direct_accuracy).collect();
                let neighbor: Vec<f64> = rs.iter().map(|r| r.neighbor_accuracy).collect();
                let (direct_mean, direct_stderr) = mean_stderr(&direct);
                let (neighbor_mean, neighbor_stderr) = mean_stderr(&neighbor);
                Aggregate {
                    solver,
                    grid: grid.2,
                    perturbation,
                    count: rs.len(),
                    direct_mean,
                    direct_stderr,
                    neighbor_mean,
                    neighbor_stderr,
                    time_mean_ms: rs.iter().map(|r| r.wall_time_ms).sum::<f64>() / rs.len() as f64,
                }
            })
            .collect();
        let mut metadata = metadata;
        metadata
            .entry("neighbor_metric".into())
            .or_insert_with(|| NEIGHBOR_METRIC.into());
        metadata
            .entry("missing_denominator".into())
            .or_insert_with(|| MISSING_DENOMINATOR.into());
        Self {
            schema: REPORT_SCHEMA,
            metadata,
            records,
            aggregates,
        }
    }

    pub fn aggregate(&self, solver: &str, grid: &str, perturbation: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.solver == solver && a.grid == grid && a.perturbation == perturbation)
    }

    /// Copy with every wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
        out.aggregates.iter_mut().for_each(|a| a.time_mean_ms = 0.0);
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        w.write_record([
            "puzzle_id",
            "solver",
            "rows",
            "cols",
            "perturbation",
            "direct_accuracy",
            "neighbor_accuracy",
            "wall_time_ms",
        ])?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<EvalRecord>> {
        let mut r = csv::Reader::from_path(path)?;
        Ok(r.deserialize().collect::<std::result::Result<Vec<EvalRecord>, _>>()?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Direct accuracy (percent, mean ± std-err) with solvers as rows and
    /// grid sizes as columns, one block per perturbation.
    pub fn table(&self) -> String {
        let mut perturbations: Vec<&str> = self.aggregates.iter().map(|a| a.perturbation.as_str()).collect();
        perturbations.dedup();
        perturbations.sort();
        perturbations.dedup();
        let mut out = String::new();
        for pert in perturbations {
            let cells: Vec<&Aggregate> = self.aggregates.iter().filter(|a| a.perturbation == pert).collect();
            let mut grids: Vec<&str> = cells.iter().map(|a| a.grid.as_str()).collect();
            grids.sort_by_key(|g| grid_key(g));
            grids.dedup();
            let mut solvers: Vec<&str> = cells.iter().map(|a| a.solver.as_str()).collect();
            solvers.sort();
            solvers.dedup();
            let _ = writeln!(out, "[{pert}] direct accuracy (%)");
            let _ = write!(out, "{:<28}", "solver");
            for g in &grids {
                let _ = write!(out, "{g:>16}");
            }
            out.push('\n');
            for s in solvers {
                let _ = write!(out, "{s:<28}");
                for g in &grids {
                    match cells.iter().find(|a| a.solver == s && a.grid == *g) {
                        Some(a) => {
                            let cell = format!("{:.2} ± {:.2}", 100.0 * a.direct_mean, 100.0 * a.direct_stderr);
                            let _ = write!(out, "{cell:>16}");
                        }
                        None => {
                            let _ = write!(out, "{:>16}", "-");
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Writes `<stem>.csv`, `<stem>.json` and `<stem>.txt` (the table) into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    report.write_csv(&dir.join(format!("{stem}.csv")))?;
    report.write_json(&dir.join(format!("{stem}.json")))?;
    std::fs::write(dir.join(format!("{stem}.txt")), report.table())
        .map_err(|e| Error::io("writing report table", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, solver: &str, k: usize, acc: f64) -> EvalRecord {
        EvalRecord {
            puzzle_id: id.into(),
            solver: solver.into(),
            rows: k,
            cols: k,
            perturbation: "clean".into(),
            direct_accuracy: acc,
            neighbor_accuracy: acc,
            wall_time_ms: 1.5,
        }
    }

    #[test]
    fn empty_report_writes_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport::new(vec![], BTreeMap::new());
        let path = dir.path().join("r.csv");
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("puzzle_id,solver,rows,cols"));
    }

    #[test]
    fn json_round_trip_and_csv_cells() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport::new(
            vec![record("b_2x2", "greedy", 2, 0.5), record("a_2x2", "greedy", 2, 1.0), record("a_4x4", "x", 4, 0.25)],
            BTreeMap::from([("seed".to_string(), "7".to_string())]),
        );
        assert_eq!(report.records[0].puzzle_id, "a_2x2");
        emit_report(&report, dir.path(), "r").unwrap();
        assert_eq!(EvalReport::read_json(&dir.path().join("r.json")).unwrap(), report);
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        let cells: usize = text.lines().skip(1).map(|l| l.split(',').count()).sum();
        assert_eq!(cells, report.records.len() * 8);
        assert_eq!(EvalReport::read_csv(&dir.path().join("r.csv")).unwrap(), report.records);
        let agg = report.aggregate("greedy", "2x2", "clean").unwrap();
        assert_eq!(agg.count, 2);
        assert!((agg.direct_mean - 0.75).abs() < 1e-12);
        assert!((agg.direct_stderr - 0.25).abs() < 1e-12);
        assert!(report.table().contains("75.00 ± 25.00"));
    }
}
