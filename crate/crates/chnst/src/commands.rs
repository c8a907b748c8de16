//! The `run`, `converge` and `check` subcommands.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use chnst_core::diagnostics::{
    DiagnosticsRecord, StructureBounds, StructureCheck, StructureSummary,
};
use chnst_core::fem::FemSpace;
use chnst_core::harness::{self, ConvergenceTable};
use chnst_core::mesh::PeriodicMesh;
use chnst_core::scheme::{Scheme, State, Trajectory};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output;
use crate::vtk;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("cannot use output directory {path}: {source}")]
    OutputDir { path: PathBuf, source: io::Error },
    #[error("solver: {0}")]
    Solver(#[from] chnst_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("structure check failed")]
    CheckFailed,
}

impl CliError {
    /// 2 for configuration and usage problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::OutputDir { .. } => 2,
            CliError::Solver(_) | CliError::Io(_) | CliError::CheckFailed => 1,
        }
    }
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.output).map_err(|source| CliError::OutputDir {
        path: cfg.output.clone(),
        source,
    })?;
    Ok(&cfg.output)
}

pub fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:06}.vtk")
}

/// Result of [`cmd_run`].
#[derive(Debug)]
pub struct RunSummary {
    pub trajectory: Trajectory,
    pub snapshots: usize,
}

/// Runs the configured preset on level `cfg.level` up to `cfg.final_time`.
/// Diagnostics rows are flushed as they are produced, so a failing step
/// leaves the rows of all earlier steps behind.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let dir = output_dir(cfg)?;
    let space = FemSpace::new(PeriodicMesh::new(cfg.n())?);
    let scheme = Scheme::new(&space, cfg.params, cfg.step)?;
    let initial = harness::preset_initial_state(cfg.preset, &space, &cfg.params)?;
    let mut csv = BufWriter::new(File::create(dir.join(DIAGNOSTICS_FILE))?);
    output::write_diagnostics_header(&mut csv)?;
    let mut io_error: Option<io::Error> = None;
    let mut snapshots = 0;
    let mut observe = |r: &DiagnosticsRecord, s: &State| {
        if io_error.is_some() {
            return;
        }
        let mut write = || -> io::Result<()> {
            output::write_diagnostics_row(&mut csv, r)?;
            csv.flush()?;
            if cfg.stride > 0 && r.step % cfg.stride == 0 {
                let mut w = BufWriter::new(File::create(dir.join(snapshot_name(r.step)))?);
                vtk::write_snapshot(
                    &mut w,
                    &space,
                    s,
                    &format!("step {} t = {:e}", r.step, r.time),
                )?;
                w.flush()?;
                snapshots += 1;
            }
            Ok(())
        };
        io_error = write().err();
    };
    let trajectory = scheme.run(&initial, cfg.final_time, &mut observe)?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    Ok(RunSummary {
        trajectory,
        snapshots,
    })
}

/// Solves every level the table needs, one worker thread per level, and
/// writes the table.
pub fn cmd_converge(cfg: &RunConfig) -> Result<ConvergenceTable, CliError> {
    if cfg.levels.len() < 2 {
        return Err(CliError::Usage(format!(
            "a convergence table needs at least two levels, got {:?}",
            cfg.levels
        )));
    }
    let dir = output_dir(cfg)?;
    let needed = harness::required_solves(&cfg.levels)?;
    let solutions: Vec<State> = thread::scope(|s| {
        let workers: Vec<_> = needed
            .iter()
            .map(|&k| {
                s.spawn(move || {
                    harness::solve_level(k, cfg.preset, &cfg.params, &cfg.step, cfg.final_time)
                })
            })
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("level worker panicked"))
            .collect::<Result<_, _>>()
    })?;
    let table = ConvergenceTable::from_solutions(&cfg.levels, &solutions)?;
    let mut w = BufWriter::new(File::create(dir.join(CONVERGENCE_FILE))?);
    output::write_convergence(&mut w, &table)?;
    w.flush()?;
    Ok(table)
}

/// Outcome of [`cmd_check`].
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub summary: StructureSummary,
    pub checks: [StructureCheck; 4],
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                format!("{verdict} {}: {:e} (bound {:e})", c.name, c.value, c.bound)
            })
            .collect()
    }
}

/// Runs `cfg.check_steps` steps and evaluates the structure checks.
pub fn cmd_check(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let space = FemSpace::new(PeriodicMesh::new(cfg.n())?);
    let scheme = Scheme::new(&space, cfg.params, cfg.step)?;
    let initial = harness::preset_initial_state(cfg.preset, &space, &cfg.params)?;
    let final_time = cfg.check_steps as f64 * cfg.step.tau;
    let trajectory = scheme.run(&initial, final_time, &mut |_, _| {})?;
    let summary = StructureSummary::from_records(&trajectory.records);
    Ok(CheckReport {
        summary,
        checks: summary.checks(&StructureBounds::default()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn small(dir: &Path, extra: &str) -> RunConfig {
        parse_config(&format!(
            "level = 3\nT = 3e-3\noutput = {}\n{extra}",
            dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn run_writes_one_row_per_step_and_snapshots_on_stride() {
        let tmp = tempfile::tempdir().unwrap();
        let summary = cmd_run(&small(tmp.path(), "stride = 2")).unwrap();
        let text = fs::read_to_string(tmp.path().join(DIAGNOSTICS_FILE)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], output::DIAGNOSTICS_HEADER);
        assert_eq!(lines.len(), 1 + 4);
        assert_eq!(summary.snapshots, 2);
        assert!(tmp.path().join(snapshot_name(0)).exists());
        assert!(tmp.path().join(snapshot_name(2)).exists());
        assert!(!tmp.path().join(snapshot_name(1)).exists());
    }

    #[test]
    fn zero_stride_writes_csv_only() {
        let tmp = tempfile::tempdir().unwrap();
        cmd_run(&small(tmp.path(), "stride = 0")).unwrap();
        let names: Vec<_> = fs::read_dir(tmp.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, [DIAGNOSTICS_FILE]);
    }

    #[test]
    fn failing_step_keeps_earlier_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let err = cmd_run(&small(tmp.path(), "newton_max = 1\nnewton_tol = 1e-300")).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let text = fs::read_to_string(tmp.path().join(DIAGNOSTICS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn single_level_is_a_usage_error() {
        let tmp = tempfile::tempdir().unwrap();
        let err = cmd_converge(&small(tmp.path(), "levels = 3")).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn check_passes_on_a_short_trajectory() {
        let tmp = tempfile::tempdir().unwrap();
        let report = cmd_check(&small(tmp.path(), "check_steps = 3")).unwrap();
        assert!(report.passed(), "{:?}", report.lines());
        assert_eq!(report.summary.steps, 3);
        assert!(report.lines().iter().all(|l| l.starts_with("PASS ")));
    }
}
