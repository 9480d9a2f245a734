//! The two-parameter alternating-block construction: grow blocks of 0s and
//! 1s so that the exact visit distribution of each prefix cylinder tracks
//! the compound Poisson law of the block's symbol, alternating between the
//! two laws.
//!
//! A block is accepted when the exact distribution of the current prefix is
//! within epsilon/3 of the block's target law for every t in the grid and
//! every count r in 1..=r0. The search scans lengths upward under explicit
//! budgets and reports partial results on exhaustion.
//!
//! A structural caveat, visible in the emitted diagnostics: once the prefix
//! mixes both symbols it has no self-overlap, so its visit counts converge
//! to a plain Poisson law with mean t/(1-p) rather than to the compound
//! law. The pure-suffix distances are reported alongside to show the
//! mechanism the construction leans on.

use std::path::Path;

use serde::Serialize;

use visits_core::counting::{exact_entry_with_tau, DpBudget};
use visits_core::dist::{pmf, CountDistribution, DistParams, Kind};
use visits_core::symbolic::cylinder_measure;
use visits_core::{Measure, ShiftSystem, Symbol};

use crate::config::{ConfigFile, OscillationCfg};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_float, write_json, CsvFile, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Confirmed,
    NotConfirmed,
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockRow {
    pub index: usize,
    pub symbol: u8,
    pub target_p: f64,
    pub n: usize,
    pub accepted: bool,
    /// Worst |P(count = r) - law(r)| over the search grid, r in 1..=r0.
    pub max_diff: f64,
    /// TV distances of the mixed prefix at t0 against both laws.
    pub tv_to_law1: f64,
    pub tv_to_law2: f64,
    /// TV distance of the pure suffix block alone against its own law.
    pub suffix_tv_to_own_law: f64,
    pub closest: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub schema_version: u32,
    pub config_fingerprint: String,
    pub w: f64,
    pub p1: f64,
    pub p2: f64,
    pub epsilon: f64,
    pub t0: f64,
    pub r0: u32,
    pub t_grid: Vec<f64>,
    pub requested_blocks: usize,
    pub blocks: Vec<BlockRow>,
    pub alternations: usize,
    pub verdict: Verdict,
    pub note: String,
}

struct Evaluator<'a> {
    system: &'a ShiftSystem,
    measure: &'a Measure,
    budget: DpBudget,
    max_tau: u64,
    r_max: usize,
}

impl<'a> Evaluator<'a> {
    /// Exact distribution of the word with `tau = floor(t/((1-p) mu))`.
    fn dist(&self, word: &[Symbol], t: f64, p: f64) -> CliResult<CountDistribution> {
        let mu = cylinder_measure(self.system, self.measure, word);
        if !(mu > 0.0) {
            return Err(CliError::config("oscillation word has measure zero"));
        }
        let tau = (t / ((1.0 - p) * mu)).floor() as u64;
        if tau > self.max_tau {
            return Err(CliError::Budget(format!(
                "observation time {tau} exceeds max_tau {}",
                self.max_tau
            )));
        }
        Ok(exact_entry_with_tau(
            self.system,
            self.measure,
            word,
            tau,
            self.r_max,
            &self.budget,
        )?)
    }

    /// Worst |P(count = r) - entry law(r)| over the grid, r in 1..=r0.
    fn max_diff(&self, word: &[Symbol], p: f64, t_grid: &[f64], r0: u32) -> CliResult<f64> {
        let mut worst = 0.0f64;
        for &t in t_grid {
            let d = self.dist(word, t, p)?;
            let params = DistParams::new(t, p)?;
            for r in 1..=r0 {
                worst = worst.max((d.probs[r as usize] - pmf(r, params, Kind::Entry)).abs());
            }
        }
        Ok(worst)
    }
}

pub struct OscillationOutcome {
    pub report_path: std::path::PathBuf,
    pub blocks_path: std::path::PathBuf,
    pub report: OscillationReport,
}

pub fn run_oscillation(config: &ConfigFile, out_dir: &Path) -> CliResult<OscillationOutcome> {
    let cfg: &OscillationCfg = config
        .oscillation
        .as_ref()
        .ok_or_else(|| CliError::config("missing [oscillation] section"))?;
    if !(cfg.w > 0.0 && cfg.w < 1.0) {
        return Err(CliError::config("oscillation weight w must lie in (0, 1)"));
    }
    if cfg.w == 0.5 {
        return Err(CliError::config(
            "the construction requires w != 1/2 (the two laws coincide)",
        ));
    }
    if !(cfg.t0 > 0.0) {
        return Err(CliError::config("t0 must be positive"));
    }
    if cfg.max_blocks == 0 {
        return Err(CliError::config("max_blocks must be at least 1"));
    }
    let p1 = cfg.w;
    let p2 = 1.0 - cfg.w;
    let epsilon = cfg.epsilon.unwrap_or((p1 - p2).abs() / 3.0);
    if !(epsilon > 0.0) {
        return Err(CliError::config("epsilon must be positive"));
    }
    let t_grid: Vec<f64> = match &cfg.t_grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|&t| !(t > 0.0) || t > cfg.t0 + 1e-12) {
                return Err(CliError::config("t_grid entries must lie in (0, t0]"));
            }
            g.clone()
        }
        None => (1..=4).map(|i| cfg.t0 * i as f64 / 4.0).collect(),
    };

    let system = ShiftSystem::full(2)?;
    let measure = Measure::bernoulli(vec![cfg.w, 1.0 - cfg.w])?;
    let r_max = cfg.r_report.max(cfg.r0 as usize + 1);
    let eval = Evaluator {
        system: &system,
        measure: &measure,
        budget: DpBudget {
            max_cells: config.budget.clone().unwrap_or_default().max_dp_cells as u128,
        },
        max_tau: cfg.max_tau,
        r_max,
    };

    let laws_at_t0 = |p: f64| -> CliResult<CountDistribution> {
        Ok(CountDistribution::limit_law(
            DistParams::new(cfg.t0, p)?,
            Kind::Entry,
            r_max,
        ))
    };
    let law1 = laws_at_t0(p1)?;
    let law2 = laws_at_t0(p2)?;

    let mut prefix: Vec<Symbol> = Vec::new();
    let mut blocks: Vec<BlockRow> = Vec::new();
    let mut exhausted = false;
    let mut note = String::new();

    'stages: for index in 1..=cfg.max_blocks {
        let symbol: Symbol = if index % 2 == 1 { 0 } else { 1 };
        let target_p = if symbol == 0 { p1 } else { p2 };
        let mut best: Option<(usize, f64)> = None;
        for n in prefix.len() + 1..=prefix.len() + cfg.max_growth {
            let mut word = prefix.clone();
            word.resize(n, symbol);
            let max_diff = match eval.max_diff(&word, target_p, &t_grid, cfg.r0) {
                Ok(v) => v,
                Err(CliError::Budget(msg)) => {
                    note = format!(
                        "block {index}: length search stopped at n = {n} ({msg}); \
                         best max|diff| so far {}",
                        best.map_or(f64::NAN, |(_, d)| d)
                    );
                    exhausted = true;
                    break 'stages;
                }
                Err(e) => return Err(e),
            };
            if best.map_or(true, |(_, d)| max_diff < d) {
                best = Some((n, max_diff));
            }
            if max_diff < epsilon / 3.0 {
                let d0 = eval.dist(&word, cfg.t0, target_p)?;
                let tv1 = d0.tv_distance(&law1);
                let tv2 = d0.tv_distance(&law2);
                // distribution of the pure suffix run alone, for diagnostics
                let suffix: Vec<Symbol> = vec![symbol; n - prefix.len()];
                let suffix_tv = eval
                    .dist(&suffix, cfg.t0, target_p)?
                    .tv_distance(if symbol == 0 { &law1 } else { &law2 });
                blocks.push(BlockRow {
                    index,
                    symbol,
                    target_p,
                    n,
                    accepted: true,
                    max_diff,
                    tv_to_law1: tv1,
                    tv_to_law2: tv2,
                    suffix_tv_to_own_law: suffix_tv,
                    closest: if tv1 <= tv2 { 1 } else { 2 },
                });
                prefix = word;
                continue 'stages;
            }
        }
        let (best_n, best_diff) = best.expect("at least one candidate evaluated");
        note = format!(
            "block {index}: no length within {} steps reached max|diff| < epsilon/3 = {}; \
             best was {} at n = {best_n}",
            cfg.max_growth,
            epsilon / 3.0,
            best_diff
        );
        exhausted = true;
        break;
    }

    let alternations = blocks
        .windows(2)
        .filter(|w| w[0].closest != w[1].closest)
        .count();
    let verdict = if exhausted {
        Verdict::BudgetExhausted
    } else if alternations >= 3 {
        Verdict::Confirmed
    } else {
        Verdict::NotConfirmed
    };

    let report = OscillationReport {
        schema_version: SCHEMA_VERSION,
        config_fingerprint: config.fingerprint(),
        w: cfg.w,
        p1,
        p2,
        epsilon,
        t0: cfg.t0,
        r0: cfg.r0,
        t_grid,
        requested_blocks: cfg.max_blocks,
        blocks,
        alternations,
        verdict,
        note,
    };

    let mut csv = CsvFile::new(
        &report.config_fingerprint,
        &[
            "index",
            "symbol",
            "target_p",
            "n",
            "accepted",
            "max_diff",
            "tv_to_law1",
            "tv_to_law2",
            "suffix_tv_to_own_law",
            "closest",
        ],
    );
    for b in &report.blocks {
        csv.row(&[
            b.index.to_string(),
            b.symbol.to_string(),
            fmt_float(b.target_p),
            b.n.to_string(),
            b.accepted.to_string(),
            fmt_float(b.max_diff),
            fmt_float(b.tv_to_law1),
            fmt_float(b.tv_to_law2),
            fmt_float(b.suffix_tv_to_own_law),
            b.closest.to_string(),
        ]);
    }
    let report_path = out_dir.join("oscillation.json");
    let blocks_path = out_dir.join("oscillation_blocks.csv");
    csv.write_to(&blocks_path)?;
    write_json(&report_path, &report)?;
    Ok(OscillationOutcome {
        report_path,
        blocks_path,
        report,
    })
}
