//! Error-bound profiles: evaluates the shift-space approximation bound
//! across a range of cylinder lengths, with the separation parameter delta
//! chosen by grid search or by the closed-form recipes for geometric and
//! algebraic mixing.

use std::path::Path;

use visits_core::bounds::{
    algebraic_mixing_delta, fit_convergence_rate, geometric_mixing_delta, optimize_delta,
    theorem7_bound, Theorem7Inputs,
};
use visits_core::symbolic::{cylinder_measure, measured_phi, PairFamily};
use visits_core::{CylinderTarget, Measure, MixingRate, ShiftSystem};

use crate::config::{ConfigFile, DeltaCfg, PhiCfg};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_float, CsvFile};

/// Fits a geometric mixing profile `coeff * rho^gap` to the measured
/// coefficients of a Markov measure over gaps `0..=40`.
pub fn fit_geometric_phi(system: &ShiftSystem, measure: &Measure) -> CliResult<MixingRate> {
    let mut points = Vec::new();
    for gap in 0..=40u64 {
        let phi = measured_phi(system, measure, 1, gap, &PairFamily::All)?;
        if phi > 0.0 {
            points.push((gap as f64, phi));
        }
    }
    if points.len() < 4 {
        // effectively independent at one step; treat as zero mixing error
        return Ok(MixingRate::Zero);
    }
    let (slope, _r2) = fit_convergence_rate(&points)?;
    let rho = slope.exp().clamp(1e-12, 1.0 - 1e-12);
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let ybar = points.iter().map(|p| p.1.ln()).sum::<f64>() / points.len() as f64;
    let coeff = (ybar - slope * xbar).exp();
    Ok(MixingRate::geometric(coeff, rho)?)
}

pub struct ProfileOutcome {
    pub csv_path: std::path::PathBuf,
    pub rows: usize,
}

pub fn run_bound_profile(config: &ConfigFile, out_dir: &Path) -> CliResult<ProfileOutcome> {
    let system = config.build_system()?;
    let measure = config.build_measure(&system)?;
    let block = config.target_block(&system)?;
    let cfg = config
        .profile
        .as_ref()
        .ok_or_else(|| CliError::config("missing [profile] section"))?;
    if cfg.n_min == 0 || cfg.n_min > cfg.n_max {
        return Err(CliError::config("need 1 <= n_min <= n_max"));
    }
    if !(cfg.t > 0.0) {
        return Err(CliError::config("profile.t must be positive"));
    }
    if cfg.r_list.is_empty() {
        return Err(CliError::config("profile.r_list must be nonempty"));
    }

    let phi_model = match &cfg.phi {
        PhiCfg::Zero => MixingRate::Zero,
        PhiCfg::Geometric { coeff, rho } => MixingRate::geometric(*coeff, *rho)?,
        PhiCfg::Algebraic { coeff, kappa } => MixingRate::algebraic(*coeff, *kappa)?,
        PhiCfg::Auto => match &measure {
            Measure::Bernoulli { .. } => MixingRate::Zero,
            Measure::Markov { .. } => fit_geometric_phi(&system, &measure)?,
        },
    };

    let fingerprint = config.fingerprint();
    let mut csv = CsvFile::new(
        &fingerprint,
        &[
            "n",
            "r",
            "t",
            "mu_n",
            "p",
            "delta",
            "phi_delta",
            "bound",
        ],
    );
    let mut rows = 0usize;
    for n in cfg.n_min..=cfg.n_max {
        let target = CylinderTarget::periodic(&system, &measure, &block, n)?;
        let mu_m = cylinder_measure(&system, &measure, &target.word()[..target.period()]);
        for &r in &cfg.r_list {
            let eval = |delta: u64| -> visits_core::Result<f64> {
                theorem7_bound(&Theorem7Inputs {
                    n,
                    m: target.period(),
                    p: target.p(),
                    q_n: target.q_n(),
                    mu_n: target.mu(),
                    delta,
                    phi_delta: phi_model.phi(delta),
                    t: cfg.t,
                    r,
                    c: cfg.c,
                })
            };
            let delta = match cfg.delta {
                DeltaCfg::Grid => {
                    let grid = (0..)
                        .map(|i| 1u64 << i)
                        .take_while(|&d| d <= (16 * n as u64).max(64))
                        .flat_map(|d| [d, d + d / 2].into_iter())
                        .collect::<std::collections::BTreeSet<u64>>();
                    optimize_delta(grid, eval)
                        .ok_or_else(|| {
                            CliError::config(format!(
                                "bound undefined for every delta at n={n} r={r}: with \
                                 t <= p*r/2 the small-t branch requires p < 1/4 \
                                 (here p = {}); raise t or drop this r",
                                target.p()
                            ))
                        })?
                        .0
                }
                DeltaCfg::Geometric => {
                    let rho = match phi_model {
                        MixingRate::Geometric { rho, .. } => rho,
                        _ => {
                            return Err(CliError::config(
                                "delta.kind = geometric requires a geometric phi model",
                            ))
                        }
                    };
                    geometric_mixing_delta(target.mu(), rho)
                }
                DeltaCfg::Algebraic => {
                    let kappa = match phi_model {
                        MixingRate::Algebraic { kappa, .. } => kappa,
                        _ => {
                            return Err(CliError::config(
                                "delta.kind = algebraic requires an algebraic phi model",
                            ))
                        }
                    };
                    algebraic_mixing_delta(mu_m, kappa)
                }
            };
            let bound = eval(delta)?;
            csv.row(&[
                n.to_string(),
                r.to_string(),
                fmt_float(cfg.t),
                fmt_float(target.mu()),
                fmt_float(target.p()),
                delta.to_string(),
                fmt_float(phi_model.phi(delta)),
                fmt_float(bound),
            ]);
            rows += 1;
        }
    }
    let csv_path = out_dir.join("bound_profile.csv");
    csv.write_to(&csv_path)?;
    Ok(ProfileOutcome { csv_path, rows })
}
