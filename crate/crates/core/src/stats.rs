//! Goodness-of-fit helper for comparing empirical counts against an exact
//! probability vector.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of `observed` counts against `expected_probs`.
/// Cells are folded from the right until every expected count reaches
/// `min_expected`. The two slices must have equal length and the expected
/// probabilities must sum to 1 within 1e-9.
pub fn chi_square_gof(
    observed: &[u64],
    expected_probs: &[f64],
    n_samples: u64,
    min_expected: f64,
) -> Result<ChiSquareResult> {
    if observed.len() != expected_probs.len() || observed.is_empty() {
        return Err(Error::invalid("observed and expected lengths must match"));
    }
    let total_p: f64 = expected_probs.iter().sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "expected probabilities sum to {total_p}, not 1"
        )));
    }
    let total_obs: u64 = observed.iter().sum();
    if total_obs != n_samples {
        return Err(Error::invalid(format!(
            "observed counts sum to {total_obs}, expected {n_samples}"
        )));
    }
    // fold low-expectation cells from the right into the last kept cell
    let mut obs: Vec<f64> = Vec::new();
    let mut exp: Vec<f64> = Vec::new();
    let mut pending_o = 0.0;
    let mut pending_e = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs).rev() {
        pending_o += o as f64;
        pending_e += p * n_samples as f64;
        if pending_e >= min_expected {
            obs.push(pending_o);
            exp.push(pending_e);
            pending_o = 0.0;
            pending_e = 0.0;
        }
    }
    if pending_e > 0.0 || pending_o > 0.0 {
        if let (Some(o), Some(e)) = (obs.last_mut(), exp.last_mut()) {
            *o += pending_o;
            *e += pending_e;
        } else {
            return Err(Error::invalid("all cells fall below the folding threshold"));
        }
    }
    if obs.len() < 2 {
        return Err(Error::invalid("need at least 2 cells after folding"));
    }
    let statistic: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = obs.len() - 1;
    let chi = ChiSquared::new(dof as f64)
        .map_err(|e| Error::invalid(format!("chi-squared dof {dof}: {e}")))?;
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
    })
}
