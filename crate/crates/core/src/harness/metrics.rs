use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::baselines::BudgetLedger;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "step,loss,step_norm,queries_cum,oracle_queries_cum,staleness_error,bound,grad_diff";

/// One CSV row: the state after `step` steps (row 0 is the initial point).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    /// Full-objective loss at the current point, uncounted.
    pub loss: f64,
    pub step_norm: f64,
    pub queries_cum: u64,
    pub oracle_queries_cum: u64,
    pub staleness_error: Option<f64>,
    pub bound: Option<f64>,
    pub grad_diff: Option<f64>,
}

impl MetricRow {
    pub fn initial(loss: f64) -> Self {
        MetricRow {
            step: 0,
            loss,
            step_norm: 0.0,
            queries_cum: 0,
            oracle_queries_cum: 0,
            staleness_error: None,
            bound: None,
            grad_diff: None,
        }
    }

    fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            fmt_f64(self.loss),
            fmt_f64(self.step_norm),
            self.queries_cum,
            self.oracle_queries_cum,
            opt(self.staleness_error),
            opt(self.bound),
            opt(self.grad_diff)
        )
    }

    fn from_csv(line: &str, row: usize) -> Result<Self> {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(Error::Parse {
                row,
                column: cells.len(),
                message: format!("expected 8 cells, found {}", cells.len()),
            });
        }
        let bad = |column: usize, e: &dyn std::fmt::Display| Error::Parse {
            row,
            column: column + 1,
            message: e.to_string(),
        };
        let int = |c: usize| cells[c].parse::<u64>().map_err(|e| bad(c, &e));
        let float = |c: usize| cells[c].parse::<f64>().map_err(|e| bad(c, &e));
        let opt = |c: usize| -> Result<Option<f64>> {
            if cells[c].is_empty() {
                Ok(None)
            } else {
                float(c).map(Some)
            }
        };
        Ok(MetricRow {
            step: int(0)?,
            loss: float(1)?,
            step_norm: float(2)?,
            queries_cum: int(3)?,
            oracle_queries_cum: int(4)?,
            staleness_error: opt(5)?,
            bound: opt(6)?,
            grad_diff: opt(7)?,
        })
    }
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub n: usize,
    pub queries_per_step: u64,
    /// Row 0 is the initial point, then one row per executed step.
    pub rows: Vec<MetricRow>,
    pub final_train_loss: Option<f64>,
    pub final_validation_loss: Option<f64>,
    /// Safety-inflated `L_ε` behind the bound column.
    pub l_eps_hat: Option<f64>,
    pub ledger: BudgetLedger,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn new(config: ExperimentConfig, n: usize, queries_per_step: u64) -> Self {
        RunRecord {
            config,
            n,
            queries_per_step,
            rows: Vec::new(),
            final_train_loss: None,
            final_validation_loss: None,
            l_eps_hat: None,
            ledger: BudgetLedger::new(queries_per_step),
            wall_time_secs: 0.0,
        }
    }

    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    /// Mean of the measured staleness errors, if any step was verified.
    pub fn mean_staleness_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self.rows.iter().filter_map(|r| r.staleness_error).collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: ExperimentConfig,
    n: usize,
    queries_per_step: u64,
    final_train_loss: Option<f64>,
    final_validation_loss: Option<f64>,
    l_eps_hat: Option<f64>,
    ledger: BudgetLedger,
    wall_time_secs: f64,
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

impl Sidecar {
    fn of(record: &RunRecord) -> Self {
        Sidecar {
            config: record.config.clone(),
            n: record.n,
            queries_per_step: record.queries_per_step,
            final_train_loss: finite(record.final_train_loss),
            final_validation_loss: finite(record.final_validation_loss),
            l_eps_hat: finite(record.l_eps_hat),
            ledger: record.ledger,
            wall_time_secs: record.wall_time_secs,
        }
    }
}

/// `run.csv` → `run.config.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("config.json")
}

fn write_sidecar(csv: &Path, record: &RunRecord) -> Result<()> {
    let path = sidecar_path(csv);
    let mut text = serde_json::to_string_pretty(&Sidecar::of(record)).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Incremental CSV output for a running experiment.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    /// Creates the CSV with its header and a provisional sidecar.
    pub fn create(path: &Path, record: &RunRecord) -> Result<Self> {
        create_parent(path)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = MetricsWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writeln!(w.out, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
        write_sidecar(path, record)?;
        Ok(w)
    }

    pub fn write_row(&mut self, row: &MetricRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self, record: &RunRecord) -> Result<()> {
        self.flush()?;
        write_sidecar(&self.path, record)
    }
}

/// Writes the record's CSV and its config sidecar.
pub fn emit_metrics(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = MetricsWriter::create(path, record)?;
    for row in &record.rows {
        w.write_row(row)?;
    }
    w.finish(record)
}

/// Reads a CSV and its sidecar back into a record.
pub fn load_metrics(path: &Path) -> Result<RunRecord> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", side.display())))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == CSV_HEADER => {}
        Some(Err(e)) => return Err(Error::io(path, e)),
        _ => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: format!("expected header `{CSV_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        rows.push(MetricRow::from_csv(&line, i + 2)?);
    }
    Ok(RunRecord {
        config: sidecar.config,
        n: sidecar.n,
        queries_per_step: sidecar.queries_per_step,
        rows,
        final_train_loss: sidecar.final_train_loss,
        final_validation_loss: sidecar.final_validation_loss,
        l_eps_hat: sidecar.l_eps_hat,
        ledger: sidecar.ledger,
        wall_time_secs: sidecar.wall_time_secs,
    })
}

/// `step` then one loss column per labelled record, aligned by row.
pub fn write_loss_table(path: &Path, first: &str, labels: &[String], records: &[RunRecord]) -> Result<()> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{first},{}", labels.join(",")).map_err(io)?;
    let len = records.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    for i in 0..len {
        let key = records
            .iter()
            .find_map(|r| r.rows.get(i))
            .map(|row| if first == "queries" { row.queries_cum } else { row.step })
            .unwrap_or(0);
        let cells: Vec<String> = records
            .iter()
            .map(|r| r.rows.get(i).map(|row| fmt_f64(row.loss)).unwrap_or_default())
            .collect();
        writeln!(out, "{key},{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{parse_config, run_experiment};

    fn config(out: &Path, extra: &str) -> ExperimentConfig {
        let mut c = parse_config(&format!(
            r#"{{"objective": {{"kind": "quadratic", "n": 6}}, "optimizer": {{"kind": "cocd", "budget": 2, "alpha": 0.2}}{extra}}}"#
        ))
        .unwrap();
        c.output = Some(out.to_path_buf());
        c
    }

    #[test]
    fn three_steps_four_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run.csv");
        run_experiment(&config(&out, r#", "steps": 3"#)).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        // cadence 0: staleness_error and bound stay empty
        for line in &lines[1..] {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!((cells[5], cells[6]), ("", ""));
        }
        assert!(sidecar_path(&out).exists());
    }

    #[test]
    fn reemission_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("a.csv");
        run_experiment(&config(&out, r#", "steps": 5, "verify_every": 2"#)).unwrap();
        let loaded = load_metrics(&out).unwrap();
        let again = dir.path().join("b.csv");
        emit_metrics(&loaded, &again).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
        assert_eq!(
            std::fs::read(sidecar_path(&out)).unwrap(),
            std::fs::read(sidecar_path(&again)).unwrap()
        );
    }

    #[test]
    fn repeated_runs_write_identical_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        run_experiment(&config(&a, r#", "steps": 20"#)).unwrap();
        run_experiment(&config(&b, r#", "steps": 20"#)).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn float_cells_round_trip() {
        for v in [0.1, 1e-300, 123456789.125, -0.0, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let c = config(&blocker.join("sub.csv"), r#", "steps": 1"#);
        let err = run_experiment(&c).unwrap_err().to_string();
        assert!(err.contains("file"), "{err}");
    }
}
