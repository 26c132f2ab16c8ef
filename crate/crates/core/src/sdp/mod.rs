//! Solvers for the finite SDPs produced by the LMI assembler: a built-in
//! primal-dual interior-point method and an adapter for external programs.

mod ipm;

use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tblmi::ConicProblem;

pub use ipm::InteriorPoint;

/// Environment variable naming an external solver command.
pub const SOLVER_ENV: &str = "HARMSYNTH_SOLVER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: Status,
    pub x: Vec<f64>,
    /// Objective at `x`, in the problem's sense.
    pub objective: f64,
    #[serde(default)]
    pub dual_objective: f64,
    /// Relative duality gap.
    pub gap: f64,
    #[serde(default)]
    pub primal_residual: f64,
    #[serde(default)]
    pub dual_residual: f64,
    /// Smallest eigenvalue of each block at `x`.
    pub min_slack_eigenvalues: Vec<f64>,
    pub iterations: usize,
    /// Seconds; not serialized so that outputs stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(default)]
    pub message: String,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Turns a non-optimal status into an error.
    pub fn require_optimal(self) -> Result<Self> {
        match self.status {
            Status::Optimal => Ok(self),
            Status::Infeasible => Err(Error::Solver(format!("problem is infeasible: {}", self.message))),
            Status::Unbounded => Err(Error::Solver(format!("problem is unbounded: {}", self.message))),
            Status::NumericalFailure => Err(Error::Solver(format!(
                "numerical failure after {} iterations: {}",
                self.iterations, self.message
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

pub trait ConicSolver {
    fn solve(&self, problem: &ConicProblem, opts: &SolveOptions) -> Result<ConicSolution>;
}

/// Runs `command problem.json solution.json` and reads the solution back.
/// The command string is split on whitespace; extra words are passed as
/// leading arguments.
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub command: String,
    pub workdir: Option<PathBuf>,
}

impl ExternalSolver {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            workdir: None,
        }
    }
}

impl ConicSolver for ExternalSolver {
    fn solve(&self, problem: &ConicProblem, _opts: &SolveOptions) -> Result<ConicSolution> {
        let mut words = self.command.split_whitespace();
        let program = words
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty external solver command".into()))?;
        let dir = match &self.workdir {
            Some(d) => d.clone(),
            None => std::env::temp_dir().join(format!("harmsynth-sdp-{}", std::process::id())),
        };
        std::fs::create_dir_all(&dir)?;
        let pfile = dir.join("problem.json");
        let sfile = dir.join("solution.json");
        std::fs::write(&pfile, problem.to_json()?)?;
        let started = std::time::Instant::now();
        let out = Command::new(program)
            .args(words)
            .arg(&pfile)
            .arg(&sfile)
            .output()
            .map_err(|e| Error::Solver(format!("cannot run external solver `{program}`: {e}")))?;
        if !out.status.success() {
            return Err(Error::Solver(format!(
                "external solver exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sfile)?;
        let mut sol: ConicSolution = serde_json::from_str(&text)?;
        if sol.x.len() != problem.nvars {
            return Err(Error::Solver(format!(
                "external solver returned {} values for {} variables",
                sol.x.len(),
                problem.nvars
            )));
        }
        sol.wall_time = started.elapsed().as_secs_f64();
        if self.workdir.is_none() {
            let _ = std::fs::remove_dir_all(&dir);
        }
        Ok(sol)
    }
}

/// The solver selected by `HARMSYNTH_SOLVER`, or the built-in method.
pub fn default_solver() -> Box<dyn ConicSolver> {
    match std::env::var(SOLVER_ENV) {
        Ok(cmd) if !cmd.trim().is_empty() => Box::new(ExternalSolver::new(cmd)),
        _ => Box::new(InteriorPoint::default()),
    }
}

/// Solves with the default solver.
pub fn solve(problem: &ConicProblem, opts: &SolveOptions) -> Result<ConicSolution> {
    default_solver().solve(problem, opts)
}
