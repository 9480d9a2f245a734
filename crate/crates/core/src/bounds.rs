//! Evaluators for the right-hand sides of the approximation theorems
//! (general compound Poisson bound and its shift-space specialization),
//! delta optimization, and log-linear convergence-rate fitting.
//!
//! Absolute constants are user-supplied knobs (default 1): only shapes,
//! rates, and monotonicity are checked against these bounds, never
//! absolute errors.

use crate::error::{Error, Result};
use crate::numeric::factorial_f64;

/// Inputs of the general compound Poisson approximation bound.
#[derive(Debug, Clone)]
pub struct BoundInputs {
    pub r: u32,
    pub t: f64,
    pub p: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub phi: f64,
    /// Immediate-return horizon `M`.
    pub big_m: u64,
    /// Base period `m`.
    pub m: u64,
    pub delta: u64,
    /// Per-index hit probability `beta`.
    pub beta: f64,
    pub gamma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// User-supplied absolute constant.
    pub c: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs {
            r: 1,
            t: 1.0,
            p: 0.3,
            p_plus: 0.3,
            p_minus: 0.3,
            phi: 0.0,
            big_m: 8,
            m: 1,
            delta: 8,
            beta: 1e-4,
            gamma: 1.0,
            gamma1: 0.0,
            gamma2: 0.0,
            c: 1.0,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_minus <= self.p && self.p <= self.p_plus && self.p_plus < 1.0) {
            return Err(Error::invalid("need p_minus <= p <= p_plus < 1"));
        }
        if self.t <= 0.0 {
            return Err(Error::invalid("bound is stated for t > 0"));
        }
        if self.m == 0 || self.m > self.big_m {
            return Err(Error::invalid("need 1 <= m <= M"));
        }
        Ok(())
    }

    /// The smallness regime the general bound is proved in.
    pub fn regime_ok(&self) -> bool {
        self.gamma >= 1.0 && self.gamma * (self.gamma1 + self.gamma2) < 1.0 / 12.0
    }
}

/// The two-regime tail factor shared by the approximation bounds:
/// `t^r e^{2r + 5t/2} / r!` when `t > p r / 2`, and
/// `(2p)^r e^{t (1+2p)/(1-4p)}` otherwise. The second regime has a pole at
/// `p = 1/4`, so `p >= 1/4` there is a domain error.
pub fn polya_tail_factor(t: f64, p: f64, r: u32) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::invalid("tail factor is stated for t > 0"));
    }
    if t > 0.5 * p * r as f64 {
        Ok(t.powi(r as i32) * (2.0 * r as f64 + 2.5 * t).exp() / factorial_f64(r as u64))
    } else {
        if p >= 0.25 {
            return Err(Error::domain(
                "small-t regime requires p < 1/4 (pole at p = 1/4)",
            ));
        }
        Ok((2.0 * p).powi(r as i32) * (t * (1.0 + 2.0 * p) / (1.0 - 4.0 * p)).exp())
    }
}

/// True when the large-`t` branch of the tail factor applies.
pub fn large_t_branch(t: f64, p: f64, r: u32) -> bool {
    t > 0.5 * p * r as f64
}

/// General compound Poisson approximation bound:
/// `C (gamma1 + delta beta) t^{r-1} e^{2r} / r!
///  + C (p_+^{M/m} + (p_+ - p_-) + phi) * tail_factor(t, p, r)`.
pub fn prop1_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let r = inputs.r;
    let rare = inputs.c
        * (inputs.gamma1 + inputs.delta as f64 * inputs.beta)
        * inputs.t.powi(r as i32 - 1)
        * (2.0 * r as f64).exp()
        / factorial_f64(r as u64);
    let eps = inputs.p_plus.powf(inputs.big_m as f64 / inputs.m as f64)
        + (inputs.p_plus - inputs.p_minus)
        + inputs.phi;
    let tail = polya_tail_factor(inputs.t, inputs.p, r)?;
    Ok(rare + inputs.c * eps * tail)
}

/// Inputs of the shift-space specialization of the bound.
#[derive(Debug, Clone)]
pub struct Theorem7Inputs {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub q_n: f64,
    pub mu_n: f64,
    pub delta: u64,
    /// The mixing coefficient evaluated at `delta`.
    pub phi_delta: f64,
    pub t: f64,
    pub r: u32,
    pub c: f64,
}

/// Shift-space bound:
/// `C delta mu(A_n) t^{r-1} e^{2r} / r!
///  + C (p^{n/m} + q_n + phi(delta)) * tail_factor(t, p, r)`.
pub fn theorem7_bound(inputs: &Theorem7Inputs) -> Result<f64> {
    if inputs.m == 0 || inputs.m > inputs.n {
        return Err(Error::invalid("need 1 <= m <= n"));
    }
    if !(0.0..1.0).contains(&inputs.p) {
        return Err(Error::invalid("need p in [0, 1)"));
    }
    let r = inputs.r;
    let rare = inputs.c
        * inputs.delta as f64
        * inputs.mu_n
        * inputs.t.powi(r as i32 - 1)
        * (2.0 * r as f64).exp()
        / factorial_f64(r as u64);
    let eps = inputs.p.powf(inputs.n as f64 / inputs.m as f64) + inputs.q_n + inputs.phi_delta;
    let tail = polya_tail_factor(inputs.t, inputs.p, r)?;
    Ok(rare + inputs.c * eps * tail)
}

/// Delta choice matching a geometrically mixing measure with ratio `rho`:
/// `delta_n = log mu(A_n) / log rho`, which makes `rho^{delta} = mu(A_n)`.
pub fn geometric_mixing_delta(mu_n: f64, rho: f64) -> u64 {
    assert!(mu_n > 0.0 && mu_n < 1.0 && rho > 0.0 && rho < 1.0);
    (mu_n.ln() / rho.ln()).ceil().max(1.0) as u64
}

/// Delta choice for algebraic mixing `phi(k) ~ k^{-kappa}`:
/// `delta_n = mu(A_m)^{-1/kappa}`, which makes `delta^{-kappa} = mu(A_m)`.
pub fn algebraic_mixing_delta(mu_m: f64, kappa: f64) -> u64 {
    assert!(mu_m > 0.0 && mu_m < 1.0 && kappa > 0.0);
    mu_m.powf(-1.0 / kappa).ceil().max(1.0) as u64
}

/// Grid search for the delta minimizing an evaluated bound. Returns the
/// best `(delta, value)`; `None` when the grid is empty or every
/// evaluation fails.
pub fn optimize_delta<F>(grid: impl IntoIterator<Item = u64>, f: F) -> Option<(u64, f64)>
where
    F: Fn(u64) -> Result<f64>,
{
    let mut best: Option<(u64, f64)> = None;
    for delta in grid {
        if let Ok(value) = f(delta) {
            if best.map_or(true, |(_, b)| value < b) {
                best = Some((delta, value));
            }
        }
    }
    best
}

/// Least-squares fit of `log(error)` against `n`; returns `(slope, r2)`.
/// Errors must be strictly positive and at least 4 points are required.
pub fn fit_convergence_rate(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 4 {
        return Err(Error::invalid("need at least 4 points"));
    }
    if points.iter().any(|&(_, e)| !(e > 0.0)) {
        return Err(Error::invalid("errors must be strictly positive"));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(x, _)| x).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("degenerate fit: all n equal"));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = ybar + slope * (x - xbar);
            (y - fit) * (y - fit)
        })
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((slope, r2))
}
