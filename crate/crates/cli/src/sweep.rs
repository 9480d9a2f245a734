//! Entry and return sweeps: for each (n, t) grid cell, the exact (or Monte
//! Carlo) count distribution, the matching limit law, per-count
//! differences, and a folded total-variation summary.

use std::path::Path;

use rayon::prelude::*;

use visits_core::counting::{
    exact_entry_distribution, exact_return_distribution, monte_carlo_distribution, DpBudget,
};
use visits_core::dist::{pmf, CountDistribution, DistParams, Kind};
use visits_core::{CylinderTarget, Measure, ShiftSystem};

use crate::config::{ConfigFile, SweepMethod};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_float, CsvFile};

pub struct SweepOutcome {
    pub detail_path: std::path::PathBuf,
    pub summary_path: std::path::PathBuf,
    pub cells: usize,
    /// Summary rows as (n, t, tau, tv) for callers that inspect results.
    pub summary: Vec<(usize, f64, u64, f64)>,
}

struct Cell {
    n: usize,
    t: f64,
    tau: u64,
    mu: f64,
    p: f64,
    dist: CountDistribution,
    limit: CountDistribution,
    tv: f64,
}

fn run_cell(
    kind: Kind,
    system: &ShiftSystem,
    measure: &Measure,
    block: &[u8],
    n: usize,
    t: f64,
    r_max: usize,
    method: SweepMethod,
    mc: Option<(u64, u64)>,
    budget: &DpBudget,
) -> CliResult<Cell> {
    let target = CylinderTarget::periodic(system, measure, block, n)?;
    let params = DistParams::new(t, target.p())?;
    let dist = match (method, kind) {
        (SweepMethod::Exact, Kind::Entry) => {
            exact_entry_distribution(system, measure, &target, t, r_max, budget)?
        }
        (SweepMethod::Exact, Kind::Return) => {
            exact_return_distribution(system, measure, &target, t, r_max, budget)?
        }
        (SweepMethod::MonteCarlo, Kind::Entry) => {
            let (samples, seed) = mc.ok_or_else(|| {
                CliError::config("method = monte_carlo requires an [mc] section with a seed")
            })?;
            monte_carlo_distribution(system, measure, &target, t, r_max, samples, seed)?
        }
        (SweepMethod::MonteCarlo, Kind::Return) => {
            return Err(CliError::config(
                "monte_carlo return sweeps are not supported; use method = exact",
            ))
        }
    };
    let limit = CountDistribution::limit_law(params, kind, r_max);
    let tv = dist.tv_distance(&limit);
    Ok(Cell {
        n,
        t,
        tau: target.tau(t),
        mu: target.mu(),
        p: target.p(),
        dist,
        limit,
        tv,
    })
}

/// Runs a sweep and writes `<stem>.csv` and `<stem>_summary.csv` under
/// `out_dir`. Budget errors flush the completed prefix of the grid before
/// propagating.
pub fn run_sweep(
    kind: Kind,
    config: &ConfigFile,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> CliResult<SweepOutcome> {
    let system = config.build_system()?;
    let measure = config.build_measure(&system)?;
    let block = config.target_block(&system)?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::config("missing [sweep] section"))?;
    if sweep.n_min == 0 || sweep.n_min > sweep.n_max {
        return Err(CliError::config("need 1 <= n_min <= n_max"));
    }
    if sweep.t_grid.is_empty() || sweep.t_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(CliError::config("t_grid must be nonempty with finite t >= 0"));
    }
    if sweep.r_max == 0 {
        return Err(CliError::config("r_max must be at least 1"));
    }
    let mc = match &config.mc {
        Some(m) => Some((m.samples, seed_override.unwrap_or(m.seed))),
        None => None,
    };
    if sweep.method == SweepMethod::MonteCarlo && mc.is_none() {
        return Err(CliError::config(
            "method = monte_carlo requires an [mc] section (samples and seed)",
        ));
    }
    let budget = DpBudget {
        max_cells: config.budget.clone().unwrap_or_default().max_dp_cells as u128,
    };

    // validate every target up front so config errors outrank budget errors
    for n in sweep.n_min..=sweep.n_max {
        CylinderTarget::periodic(&system, &measure, &block, n)?;
    }

    let grid: Vec<(usize, f64)> = (sweep.n_min..=sweep.n_max)
        .flat_map(|n| sweep.t_grid.iter().map(move |&t| (n, t)))
        .collect();
    let results: Vec<CliResult<Cell>> = grid
        .par_iter()
        .map(|&(n, t)| {
            run_cell(
                kind, &system, &measure, &block, n, t, sweep.r_max, sweep.method, mc, &budget,
            )
        })
        .collect();

    let stem = match kind {
        Kind::Entry => "entry_sweep",
        Kind::Return => "return_sweep",
    };
    let fingerprint = config.fingerprint();
    let mut detail = CsvFile::new(&fingerprint, &["n", "t", "r", "exact", "limit", "abs_diff"]);
    let mut summary_cols = vec!["n", "t", "tau", "mu_n", "p", "tv"];
    if kind == Kind::Return {
        summary_cols.extend_from_slice(&["zero_exact", "zero_limit"]);
    }
    let mut summary = CsvFile::new(&fingerprint, &summary_cols);

    let mut outcome_rows = Vec::new();
    let mut failure: Option<CliError> = None;
    for result in results {
        match result {
            Ok(cell) => {
                for r in 0..=cell.dist.r_max() {
                    detail.row(&[
                        cell.n.to_string(),
                        fmt_float(cell.t),
                        r.to_string(),
                        fmt_float(cell.dist.probs[r]),
                        fmt_float(cell.limit.probs[r]),
                        fmt_float((cell.dist.probs[r] - cell.limit.probs[r]).abs()),
                    ]);
                }
                let mut row = vec![
                    cell.n.to_string(),
                    fmt_float(cell.t),
                    cell.tau.to_string(),
                    fmt_float(cell.mu),
                    fmt_float(cell.p),
                    fmt_float(cell.tv),
                ];
                if kind == Kind::Return {
                    let zero_limit = pmf(0, DistParams::new(cell.t, cell.p)?, Kind::Return);
                    row.push(fmt_float(cell.dist.probs[0]));
                    row.push(fmt_float(zero_limit));
                }
                summary.row(&row);
                outcome_rows.push((cell.n, cell.t, cell.tau, cell.tv));
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    let detail_path = out_dir.join(format!("{stem}.csv"));
    let summary_path = out_dir.join(format!("{stem}_summary.csv"));
    detail.write_to(&detail_path)?;
    summary.write_to(&summary_path)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(SweepOutcome {
        detail_path,
        summary_path,
        cells: outcome_rows.len(),
        summary: outcome_rows,
    })
}
