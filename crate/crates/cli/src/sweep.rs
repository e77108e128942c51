//! Parallel sweeps over (epsilon, N, seed) with deterministic CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::SweepSpec;
use crate::error::{CliError, CliResult, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK};
use crate::solve::{Bench, SolveMode, SolveReport};

pub const CSV_COLUMNS: [&str; 13] = [
    "mode",
    "epsilon",
    "N",
    "seed",
    "total_samples",
    "rho_hat",
    "rho_star",
    "gap",
    "constraint_value",
    "violation",
    "T",
    "wall_ms",
    "status",
];

#[derive(Debug, Clone)]
pub enum CellResult {
    Solved(Box<SolveReport>),
    Failed { mode: SolveMode, epsilon: f64, n: u64, seed: u64, error: String, infeasible: bool },
}

impl CellResult {
    pub fn key(&self) -> (f64, u64, u64) {
        match self {
            CellResult::Solved(r) => (r.epsilon, r.n, r.seed),
            CellResult::Failed { epsilon, n, seed, .. } => (*epsilon, *n, *seed),
        }
    }

    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            CellResult::Solved(r) => Some(r),
            CellResult::Failed { .. } => None,
        }
    }

    fn row(&self) -> CsvRow {
        match self {
            CellResult::Solved(r) => CsvRow {
                mode: r.mode,
                epsilon: r.epsilon,
                n: r.n,
                seed: r.seed,
                total_samples: Some(r.total_samples),
                rho_hat: Some(r.rho_hat),
                rho_star: Some(r.rho_star),
                gap: Some(r.gap),
                constraint_value: Some(r.constraint_value),
                violation: Some(r.violation),
                t: Some(r.iterations),
                wall_ms: r.wall_ms,
                status: r.status().to_string(),
            },
            CellResult::Failed { mode, epsilon, n, seed, error, infeasible } => CsvRow {
                mode: *mode,
                epsilon: *epsilon,
                n: *n,
                seed: *seed,
                total_samples: None,
                rho_hat: None,
                rho_star: None,
                gap: None,
                constraint_value: None,
                violation: None,
                t: None,
                wall_ms: None,
                status: if *infeasible { format!("infeasible: {error}") } else { format!("error: {error}") },
            },
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    mode: SolveMode,
    epsilon: f64,
    #[serde(rename = "N")]
    n: u64,
    seed: u64,
    total_samples: Option<u64>,
    rho_hat: Option<f64>,
    rho_star: Option<f64>,
    gap: Option<f64>,
    constraint_value: Option<f64>,
    violation: Option<f64>,
    #[serde(rename = "T")]
    t: Option<u64>,
    wall_ms: Option<f64>,
    status: String,
}

/// Every cell of the spec, sorted by (epsilon, N, seed).
pub fn run_sweep(spec: &SweepSpec) -> CliResult<Vec<CellResult>> {
    spec.validate()?;
    let bench = Bench::with_structure(spec.instance.load()?, spec.structure)?;
    run_cells(&bench, spec)
}

pub fn run_cells(bench: &Bench, spec: &SweepSpec) -> CliResult<Vec<CellResult>> {
    let cells: Vec<(f64, u64, u64)> = spec
        .epsilons
        .iter()
        .flat_map(|&e| spec.samples.iter().flat_map(move |&n| spec.seeds.iter().map(move |&s| (e, n, s))))
        .collect();
    let mut results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(epsilon, n, seed)| match bench.solve(spec.mode, epsilon, n, seed, &spec.options) {
            Ok(solved) => CellResult::Solved(Box::new(solved.report)),
            Err(e) => CellResult::Failed {
                mode: spec.mode,
                epsilon,
                n,
                seed,
                infeasible: matches!(e, CliError::Infeasible(_)),
                error: e.to_string(),
            },
        })
        .collect();
    results.sort_by(|a, b| {
        let (ka, kb) = (a.key(), b.key());
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2))
    });
    Ok(results)
}

pub fn write_csv<W: Write>(rows: &[CellResult], w: W) -> CliResult<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(CSV_COLUMNS)?;
    }
    for row in rows {
        out.serialize(row.row())?;
    }
    out.flush()?;
    Ok(())
}

/// 0 unless every cell failed; then 2 if all failures were infeasibility, else 1.
/// Unmet objectives are data, not failures.
pub fn sweep_exit_code(rows: &[CellResult]) -> i32 {
    if rows.iter().any(|r| r.report().is_some()) {
        EXIT_OK
    } else if !rows.is_empty() && rows.iter().all(|r| matches!(r, CellResult::Failed { infeasible: true, .. })) {
        EXIT_INFEASIBLE
    } else {
        EXIT_INPUT
    }
}
