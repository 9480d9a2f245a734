//! Pólya-Aeppli (geometric compound Poisson) laws for entry and return
//! counts: polynomials, PMFs, generating functions, factorial moments,
//! sampling, and the entry/return integral relation.
//!
//! The entry law has PMF `e^{-t} P_r(t, p)` with
//! `P_r(t,p) = sum_{j=1}^r p^{r-j} (1-p)^j t^j/j! C(r-1, j-1)` and `P_0 = 1`.
//! The return law has PMF `e^{-t} Phat_r(t, p)` with
//! `Phat_r(t,p) = sum_{j=0}^r p^{r-j} (1-p)^{j+1} t^j/j! C(r, j)`.
//! At `p = 0` both collapse to Poisson(t).

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    binomial_f64, binomial_u128, factorial_f64, ln_binomial, ln_factorial, log_sum_exp,
    NeumaierSum,
};

/// Above this `t` the PMF is assembled in log space to avoid underflow of
/// `e^{-t}` against a large polynomial value.
const LOG_SPACE_T: f64 = 30.0;
/// Above this `r` binomial coefficients leave the exact-integer range.
const LOG_SPACE_R: u32 = 64;

/// Parameter pair `(t, p)` of the entry/return laws: rescaled time `t >= 0`
/// and cluster parameter `p` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistParams {
    t: f64,
    p: f64,
}

impl DistParams {
    pub fn new(t: f64, p: f64) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::invalid(format!("t must be finite and >= 0, got {t}")));
        }
        if !p.is_finite() || !(0.0..1.0).contains(&p) {
            return Err(Error::invalid(format!("p must lie in [0, 1), got {p}")));
        }
        Ok(Self { t, p })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Which of the two laws is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Entry,
    Return,
}

/// How a count distribution was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    MonteCarlo,
    LimitLaw,
}

/// Context a count distribution was computed in. `t` and `p` are `None`
/// when the producing call had no time rescaling or cluster parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountParams {
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    pub tau: u64,
}

/// A finite distribution over hit counts `r = 0..=r_max` plus explicit
/// mass for counts beyond `r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    pub probs: Vec<f64>,
    pub tail_mass: f64,
    pub provenance: Provenance,
    pub sample_count: u64,
    pub params: CountParams,
}

#[derive(Serialize)]
struct CountDistributionJson<'a> {
    r_max: usize,
    probs: &'a [f64],
    tail_mass: f64,
    provenance: Provenance,
    sample_count: u64,
    params: CountParams,
}

impl CountDistribution {
    pub fn r_max(&self) -> usize {
        self.probs.len() - 1
    }

    /// Probability vector mass plus the explicit tail.
    pub fn total_mass(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for &x in &self.probs {
            s.add(x);
        }
        s.add(self.tail_mass);
        s.total()
    }

    /// Checks the distribution invariants; Monte Carlo distributions are
    /// held to the same mass bound since counting is conservative.
    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(Error::invalid("empty probability vector"));
        }
        for (r, &x) in self.probs.iter().enumerate() {
            if !(0.0..=1.0 + 1e-12).contains(&x) {
                return Err(Error::invalid(format!("probs[{r}] = {x} outside [0,1]")));
            }
        }
        if self.tail_mass < -1e-15 {
            return Err(Error::invalid(format!("negative tail mass {}", self.tail_mass)));
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("total mass {mass} not within 1e-9 of 1")));
        }
        Ok(())
    }

    /// Limit-law distribution `pmf(r)` for `r = 0..=r_max`, remaining mass
    /// in the tail bucket.
    pub fn limit_law(params: DistParams, kind: Kind, r_max: usize) -> Self {
        let probs: Vec<f64> = (0..=r_max as u32).map(|r| pmf(r, params, kind)).collect();
        let mut s = NeumaierSum::new();
        for &x in &probs {
            s.add(x);
        }
        let tail = (1.0 - s.total()).max(0.0);
        CountDistribution {
            probs,
            tail_mass: tail,
            provenance: Provenance::LimitLaw,
            sample_count: 0,
            params: CountParams {
                t: Some(params.t),
                p: Some(params.p),
                n: 0,
                tau: 0,
            },
        }
    }

    /// Total variation distance with both tails folded into a final bucket.
    /// The two distributions must share the same `r_max`.
    pub fn tv_distance(&self, other: &CountDistribution) -> f64 {
        assert_eq!(
            self.probs.len(),
            other.probs.len(),
            "tv_distance requires equal r_max"
        );
        let mut s = NeumaierSum::new();
        for (a, b) in self.probs.iter().zip(&other.probs) {
            s.add((a - b).abs());
        }
        s.add((self.tail_mass - other.tail_mass).abs());
        0.5 * s.total()
    }

    /// Mean over the retained buckets (the tail contributes nothing, so the
    /// result undershoots by at most `tail_mass * E[r | r > r_max]`).
    pub fn mean(&self) -> f64 {
        let mut s = NeumaierSum::new();
        for (r, &x) in self.probs.iter().enumerate() {
            s.add(r as f64 * x);
        }
        s.total()
    }

    /// Factorial moment `E[C(count, k)]` over the retained buckets.
    pub fn factorial_moment(&self, k: u32) -> f64 {
        let mut s = NeumaierSum::new();
        for (r, &x) in self.probs.iter().enumerate() {
            s.add(binomial_f64(r as u64, k as u64) * x);
        }
        s.total()
    }

    /// Serializes to the documented JSON schema.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&CountDistributionJson {
            r_max: self.r_max(),
            probs: &self.probs,
            tail_mass: self.tail_mass,
            provenance: self.provenance,
            sample_count: self.sample_count,
            params: self.params,
        })
        .expect("count distribution serialization cannot fail")
    }
}

/// The polynomial `P_r(t, p)`; `P_0 = 1`.
pub fn entry_polynomial(r: u32, params: DistParams) -> f64 {
    polynomial(r, params, Kind::Entry)
}

/// The polynomial `Phat_r(t, p)`; `Phat_0 = 1 - p` for every `t`.
pub fn return_polynomial(r: u32, params: DistParams) -> f64 {
    polynomial(r, params, Kind::Return)
}

fn polynomial(r: u32, params: DistParams, kind: Kind) -> f64 {
    if params.t > LOG_SPACE_T || r > LOG_SPACE_R {
        return log_polynomial(r, params, kind).exp();
    }
    let (t, p) = (params.t, params.p);
    match kind {
        Kind::Entry => {
            if r == 0 {
                return 1.0;
            }
            let mut s = NeumaierSum::new();
            for j in 1..=r {
                let c = binomial_u128((r - 1) as u64, (j - 1) as u64).expect("r <= 64") as f64;
                let term = p.powi((r - j) as i32)
                    * (1.0 - p).powi(j as i32)
                    * t.powi(j as i32)
                    / factorial_f64(j as u64)
                    * c;
                s.add(term);
            }
            s.total()
        }
        Kind::Return => {
            let mut s = NeumaierSum::new();
            for j in 0..=r {
                let c = binomial_u128(r as u64, j as u64).expect("r <= 64") as f64;
                let term = p.powi((r - j) as i32)
                    * (1.0 - p).powi((j + 1) as i32)
                    * t.powi(j as i32)
                    / factorial_f64(j as u64)
                    * c;
                s.add(term);
            }
            s.total()
        }
    }
}

/// ln of the defining sum, via log-sum-exp over the positive terms.
fn log_polynomial(r: u32, params: DistParams, kind: Kind) -> f64 {
    let (t, p) = (params.t, params.p);
    let ln_t = t.ln();
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut logs = Vec::with_capacity(r as usize + 1);
    let (j_lo, j_hi): (u32, u32) = match kind {
        Kind::Entry => {
            if r == 0 {
                return 0.0;
            }
            (1, r)
        }
        Kind::Return => (0, r),
    };
    for j in j_lo..=j_hi {
        // p^{r-j}: skip impossible terms rather than producing NaN from 0*inf
        if p == 0.0 && j != r {
            continue;
        }
        if t == 0.0 && j != 0 {
            continue;
        }
        let ln_c = match kind {
            Kind::Entry => ln_binomial((r - 1) as u64, (j - 1) as u64),
            Kind::Return => ln_binomial(r as u64, j as u64),
        };
        let q_pow = match kind {
            Kind::Entry => j as f64,
            Kind::Return => (j + 1) as f64,
        };
        let mut l = q_pow * ln_q + ln_c - ln_factorial(j as u64);
        if j != r {
            l += (r - j) as f64 * ln_p;
        }
        if j != 0 {
            l += j as f64 * ln_t;
        }
        logs.push(l);
    }
    log_sum_exp(&logs)
}

/// Entry-law PMF `e^{-t} P_r(t, p)`.
pub fn entry_pmf(r: u32, params: DistParams) -> f64 {
    pmf(r, params, Kind::Entry)
}

/// Return-law PMF `e^{-t} Phat_r(t, p)`.
pub fn return_pmf(r: u32, params: DistParams) -> f64 {
    pmf(r, params, Kind::Return)
}

/// PMF of the chosen law at count `r`.
pub fn pmf(r: u32, params: DistParams, kind: Kind) -> f64 {
    if params.t > LOG_SPACE_T || r > LOG_SPACE_R {
        (log_polynomial(r, params, kind) - params.t).exp()
    } else {
        (-params.t).exp() * polynomial(r, params, kind)
    }
}

fn pgf_domain_check(abs_z: f64, p: f64) -> Result<()> {
    if p > 0.0 && abs_z >= 1.0 / p {
        return Err(Error::domain(format!(
            "|z| = {abs_z} is outside the convergence disk |z| < {}",
            1.0 / p
        )));
    }
    Ok(())
}

/// Entry-law probability generating function `exp(t (z-1)/(1-pz))`.
pub fn entry_pgf(z: f64, params: DistParams) -> Result<f64> {
    pgf_domain_check(z.abs(), params.p)?;
    Ok((params.t * (z - 1.0) / (1.0 - params.p * z)).exp())
}

/// Return-law probability generating function
/// `(1-p)/(1-pz) * exp(t (z-1)/(1-pz))`.
pub fn return_pgf(z: f64, params: DistParams) -> Result<f64> {
    pgf_domain_check(z.abs(), params.p)?;
    Ok((1.0 - params.p) / (1.0 - params.p * z) * entry_pgf(z, params)?)
}

/// Entry PGF on the complex disk `|z| < 1/p`.
pub fn entry_pgf_complex(z: Complex64, params: DistParams) -> Result<Complex64> {
    pgf_domain_check(z.norm(), params.p)?;
    Ok((params.t * (z - 1.0) / (Complex64::new(1.0, 0.0) - params.p * z)).exp())
}

/// Return PGF on the complex disk `|z| < 1/p`.
pub fn return_pgf_complex(z: Complex64, params: DistParams) -> Result<Complex64> {
    pgf_domain_check(z.norm(), params.p)?;
    let one = Complex64::new(1.0, 0.0);
    Ok((one - params.p) / (one - params.p * z) * entry_pgf_complex(z, params)?)
}

/// `k`-th factorial moment `Q_k` (entry) or `Qhat_k` (return); `Q_0 = 1`.
pub fn factorial_moment(k: u32, params: DistParams, kind: Kind) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (t, p) = (params.t, params.p);
    let scale = (1.0 - p).powi(-(k as i32));
    let mut s = NeumaierSum::new();
    match kind {
        Kind::Entry => {
            for j in 1..=k {
                s.add(
                    p.powi((k - j) as i32) * t.powi(j as i32) / factorial_f64(j as u64)
                        * binomial_f64((k - 1) as u64, (j - 1) as u64),
                );
            }
        }
        Kind::Return => {
            for j in 0..=k {
                s.add(
                    p.powi((k - j) as i32) * t.powi(j as i32) / factorial_f64(j as u64)
                        * binomial_f64(k as u64, j as u64),
                );
            }
        }
    }
    scale * s.total()
}

/// Closed-form `(mean, variance)` of the chosen law.
pub fn moments(params: DistParams, kind: Kind) -> (f64, f64) {
    let (t, p) = (params.t, params.p);
    let q = 1.0 - p;
    match kind {
        Kind::Entry => (t / q, t * (1.0 + p) / (q * q)),
        Kind::Return => ((t + p) / q, (t + t * p + p) / (q * q)),
    }
}

/// Cluster-size draw: geometric on {1, 2, ...} with success probability 1-p.
fn sample_cluster<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p == 0.0 {
        return 1;
    }
    let u: f64 = rng.gen::<f64>();
    // 1 - u lies in (0, 1]; ln(1-u)/ln(p) counts the failures.
    1 + ((1.0 - u).ln() / p.ln()).floor() as u64
}

/// Draws one count from the chosen law.
///
/// Entry counts use the compound-geometric representation: `N ~ Poisson(t)`
/// clusters, each geometric on {1, 2, ...} with success probability `1-p`.
/// Its PGF is `exp(t ((1-p)z/(1-pz) - 1))`, which equals the entry PGF.
/// Return counts are drawn by inverse CDF from the return PMF.
pub fn sample<R: Rng + ?Sized>(params: DistParams, rng: &mut R, kind: Kind) -> u64 {
    match kind {
        Kind::Entry => {
            let n = if params.t == 0.0 {
                0
            } else {
                let poisson = rand_distr::Poisson::new(params.t).expect("t > 0");
                rand_distr::Distribution::sample(&poisson, rng) as u64
            };
            (0..n).map(|_| sample_cluster(params.p, rng)).sum()
        }
        Kind::Return => {
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            let mut r = 0u32;
            loop {
                cum += return_pmf(r, params);
                if u < cum || r > 1_000_000 {
                    return r as u64;
                }
                r += 1;
            }
        }
    }
}

/// Grid and tolerance for the entry/return integral relation check.
#[derive(Debug, Clone)]
pub struct QuadratureSpec {
    /// Upper end of the time interval that is scanned.
    pub t_max: f64,
    /// Number of evenly spaced check points in `(0, t_max]`.
    pub grid_points: usize,
    /// Absolute tolerance requested from the adaptive quadrature.
    pub tol: f64,
    /// Maximum recursion depth before reporting non-convergence.
    pub max_depth: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            t_max: 5.0,
            grid_points: 10,
            tol: 1e-9,
            max_depth: 40,
        }
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence(format!(
            "interval [{a}, {b}] did not reach tolerance {tol}"
        )));
    }
    let l = adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_simpson(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

/// Checks the relation between the entry and return laws in Kac-normalized
/// time: with `D_k(t) = e^{-u} P_k(u, p)` and `Dhat_k(t) = e^{-u} Phat_k(u, p)`
/// where `u = (1-p) t`, the entry law satisfies
/// `D_k(t) = integral_0^t (Dhat_{k-1}(s) - Dhat_k(s)) ds` for `k >= 1`.
///
/// Returns the maximum absolute residual over the check grid.
pub fn integral_relation_residual(
    params: DistParams,
    k: u32,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("the integral relation is stated for k >= 1"));
    }
    if spec.grid_points == 0 || spec.t_max <= 0.0 {
        return Err(Error::invalid("quadrature grid must be nonempty with t_max > 0"));
    }
    let p = params.p;
    let kac = |s: f64| {
        let u = (1.0 - p) * s;
        let up = DistParams { t: u, p };
        (-u).exp() * (return_polynomial(k - 1, up) - return_polynomial(k, up))
    };
    let mut worst: f64 = 0.0;
    for i in 1..=spec.grid_points {
        let t = spec.t_max * (i as f64) / (spec.grid_points as f64);
        let integral = integrate(kac, 0.0, t, spec.tol, spec.max_depth)?;
        let u = (1.0 - p) * t;
        let lhs = (-u).exp() * entry_polynomial(k, DistParams { t: u, p });
        worst = worst.max((integral - lhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(t: f64, p: f64) -> DistParams {
        DistParams::new(t, p).unwrap()
    }

    #[test]
    fn entry_polynomial_base_cases() {
        // P_0 = 1 for any parameters
        assert_eq!(entry_polynomial(0, params(3.7, 0.4)), 1.0);
        // P_r(0, p) = 0 for r >= 1
        for r in 1..6 {
            assert_eq!(entry_polynomial(r, params(0.0, 0.6)), 0.0);
        }
        // single j = 1 term: P_1 = (1-p) t
        let p = params(2.0, 0.25);
        assert!((entry_polynomial(1, p) - 0.75 * 2.0).abs() < 1e-15);
        // p = 0 recovers Poisson terms t^r / r!
        for r in 0..10u32 {
            let expect = 1.5f64.powi(r as i32) / factorial_f64(r as u64);
            let got = entry_polynomial(r, params(1.5, 0.0));
            assert!((got - expect).abs() <= 1e-15 * expect.max(1.0));
        }
    }

    #[test]
    fn return_polynomial_base_cases() {
        // Phat_0 = 1 - p, independent of t
        assert!((return_polynomial(0, params(0.0, 0.35)) - 0.65).abs() < 1e-15);
        assert!((return_polynomial(0, params(4.2, 0.35)) - 0.65).abs() < 1e-15);
        // Phat_r(0, p) = p^r (1 - p)
        for r in 1..8u32 {
            let got = return_polynomial(r, params(0.0, 0.35));
            let expect = 0.35f64.powi(r as i32) * 0.65;
            assert!((got - expect).abs() < 1e-15);
        }
        // p = 0 gives Poisson terms
        for r in 0..10u32 {
            let expect = 2.5f64.powi(r as i32) / factorial_f64(r as u64);
            assert!((return_polynomial(r, params(2.5, 0.0)) - expect).abs() <= 1e-14 * expect.max(1.0));
        }
    }

    #[test]
    fn pmf_spot_values() {
        // Poisson(1) at r = 1
        assert!((entry_pmf(1, params(1.0, 0.0)) - (-1.0f64).exp()).abs() < 1e-15);
        // hand expansion: P_2(2, 0.5) = 0.5*0.5*2 + 0.25*2 = 1.0
        assert!((entry_pmf(2, params(2.0, 0.5)) - (-2.0f64).exp()).abs() < 1e-15);
        // P_0 = 1
        assert!((entry_pmf(0, params(3.0, 0.7)) - (-3.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn pmf_log_path_agrees_with_direct() {
        // straddle the t threshold with values where both routes work
        for &r in &[0u32, 1, 5, 40, 80] {
            for &p in &[0.0, 0.3, 0.8] {
                let a = pmf(r, params(29.9, p), Kind::Entry);
                let direct = (-29.9f64).exp() * polynomial(r, params(29.9, p), Kind::Entry);
                assert!((a - direct).abs() <= 1e-12 * direct.max(1e-30));
                let big = pmf(r, params(40.0, p), Kind::Entry);
                assert!(big.is_finite() && big >= 0.0);
            }
        }
    }

    #[test]
    fn normalization_small_grid() {
        for &p in &[0.0, 0.3, 0.8] {
            for &t in &[0.5, 5.0, 20.0] {
                let pp = params(t, p);
                let mut s = NeumaierSum::new();
                let mut r = 0u32;
                loop {
                    s.add(entry_pmf(r, pp));
                    if 1.0 - s.total() < 1e-12 || r > 5000 {
                        break;
                    }
                    r += 1;
                }
                assert!(
                    (s.total() - 1.0).abs() < 1e-10,
                    "entry mass {} at t={t} p={p}",
                    s.total()
                );
            }
        }
    }

    #[test]
    fn pgf_values_and_domain() {
        let pp = params(1.3, 0.4);
        assert!((entry_pgf(1.0, pp).unwrap() - 1.0).abs() < 1e-15);
        assert!((return_pgf(1.0, pp).unwrap() - 1.0).abs() < 1e-15);
        // g_0(z) = exp(t(z-1))
        let p0 = params(1.3, 0.0);
        assert!((entry_pgf(0.25, p0).unwrap() - (1.3f64 * (0.25 - 1.0)).exp()).abs() < 1e-15);
        // return pgf at 0 equals the return pmf at 0
        assert!((return_pgf(0.0, pp).unwrap() - return_pmf(0, pp)).abs() < 1e-15);
        // outside the disk
        assert!(entry_pgf(2.5, pp).is_err());
        assert!(entry_pgf_complex(Complex64::new(0.0, 2.5), pp).is_err());
        // complex evaluation agrees with real on the real axis
        let c = entry_pgf_complex(Complex64::new(0.5, 0.0), pp).unwrap();
        assert!((c.re - entry_pgf(0.5, pp).unwrap()).abs() < 1e-15);
        assert!(c.im.abs() < 1e-15);
    }

    #[test]
    fn pgf_matches_pmf_series() {
        for &p in &[0.0, 0.3, 0.7] {
            let pp = params(2.0, p);
            for &z in &[0.0f64, 0.25, 0.5, -0.5] {
                for kind in [Kind::Entry, Kind::Return] {
                    let mut s = NeumaierSum::new();
                    for r in 0..200u32 {
                        s.add(z.powi(r as i32) * pmf(r, pp, kind));
                    }
                    let expect = match kind {
                        Kind::Entry => entry_pgf(z, pp).unwrap(),
                        Kind::Return => return_pgf(z, pp).unwrap(),
                    };
                    assert!(
                        (s.total() - expect).abs() < 1e-9,
                        "kind {kind:?} z {z} p {p}: {} vs {expect}",
                        s.total()
                    );
                }
            }
        }
    }

    #[test]
    fn factorial_moments_match_sums() {
        for &p in &[0.0, 0.4, 0.8] {
            for &t in &[0.5, 2.0, 5.0] {
                let pp = params(t, p);
                for kind in [Kind::Entry, Kind::Return] {
                    assert_eq!(factorial_moment(0, pp, kind), 1.0);
                    for k in 1..=4u32 {
                        let mut s = NeumaierSum::new();
                        for r in 0..2500u32 {
                            s.add(binomial_f64(r as u64, k as u64) * pmf(r, pp, kind));
                        }
                        let q = factorial_moment(k, pp, kind);
                        assert!(
                            (s.total() - q).abs() < 1e-8 * q.max(1.0),
                            "k={k} t={t} p={p} {kind:?}: sum {} vs Q {q}",
                            s.total()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn q1_equals_mean() {
        let pp = params(1.7, 0.3);
        assert!((factorial_moment(1, pp, Kind::Entry) - 1.7 / 0.7).abs() < 1e-14);
        assert!((factorial_moment(1, pp, Kind::Return) - (1.7 + 0.3) / 0.7).abs() < 1e-14);
    }

    #[test]
    fn moments_closed_forms() {
        let (m, v) = moments(params(1.0, 0.0), Kind::Entry);
        assert_eq!((m, v), (1.0, 1.0));
        let pp = params(2.0, 0.5);
        let (m, v) = moments(pp, Kind::Entry);
        assert!((m - 4.0).abs() < 1e-15);
        assert!((v - 2.0 * 1.5 / 0.25).abs() < 1e-15);
        let (m, v) = moments(pp, Kind::Return);
        assert!((m - 2.5 / 0.5).abs() < 1e-15);
        assert!((v - (2.0 + 1.0 + 0.5) / 0.25).abs() < 1e-15);
    }

    #[test]
    fn moments_match_truncated_sums() {
        for kind in [Kind::Entry, Kind::Return] {
            let pp = params(3.0, 0.6);
            let (mean, var) = moments(pp, kind);
            let mut m = NeumaierSum::new();
            let mut m2 = NeumaierSum::new();
            for r in 0..4000u32 {
                let x = pmf(r, pp, kind);
                m.add(r as f64 * x);
                m2.add((r as f64) * (r as f64) * x);
            }
            assert!((m.total() - mean).abs() < 1e-8);
            assert!((m2.total() - m.total() * m.total() - var).abs() < 1e-8);
        }
    }

    #[test]
    fn sampler_degenerate_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            assert_eq!(sample(params(0.0, 0.6), &mut rng, Kind::Entry), 0);
        }
        // mean t/(1-p) = 4 with sigma = sqrt(var/n)
        let pp = params(2.0, 0.5);
        let n = 200_000u64;
        let total: u64 = (0..n).map(|_| sample(pp, &mut rng, Kind::Entry)).sum();
        let mean = total as f64 / n as f64;
        let sigma = (moments(pp, Kind::Entry).1 / n as f64).sqrt();
        assert!(
            (mean - 4.0).abs() < 3.0 * sigma + 1e-9,
            "sample mean {mean} vs 4.0 (3 sigma = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn return_sampler_matches_pmf_empirically() {
        let pp = params(1.0, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000u64;
        let mut counts = vec![0u64; 12];
        for _ in 0..n {
            let r = sample(pp, &mut rng, Kind::Return) as usize;
            counts[r.min(11)] += 1;
        }
        for r in 0..10u32 {
            let expect = return_pmf(r, pp);
            let got = counts[r as usize] as f64 / n as f64;
            let sd = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (got - expect).abs() < 5.0 * sd + 1e-4,
                "r={r}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn integral_relation_poisson_and_compound() {
        let spec = QuadratureSpec::default();
        // Poisson case: machine-level identity
        let r0 = integral_relation_residual(params(1.0, 0.0), 1, &spec).unwrap();
        assert!(r0 < 1e-10, "poisson residual {r0}");
        // compound cases
        let r1 = integral_relation_residual(params(1.0, 0.3), 1, &spec).unwrap();
        assert!(r1 < 1e-6, "k=1 p=0.3 residual {r1}");
        let r3 = integral_relation_residual(params(1.0, 0.5), 3, &spec).unwrap();
        assert!(r3 < 1e-6, "k=3 p=0.5 residual {r3}");
        assert!(integral_relation_residual(params(1.0, 0.3), 0, &spec).is_err());
    }

    #[test]
    fn integral_relation_k1_closed_form() {
        // d/dt G_1 and (Ghat_0 - Ghat_1) both equal (1-p)^2 e^{-u} (1-u)
        let p = 0.3;
        for i in 1..=20 {
            let t = 0.25 * i as f64;
            let u = (1.0 - p) * t;
            let up = params(u, p);
            let rhs = (-u).exp() * (return_polynomial(0, up) - return_polynomial(1, up));
            let closed = (1.0 - p) * (1.0 - p) * (-u).exp() * (1.0 - u);
            assert!((rhs - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn count_distribution_json_schema_fields() {
        let d = CountDistribution::limit_law(params(1.0, 0.3), Kind::Entry, 3);
        let json = d.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["r_max"], 3);
        assert_eq!(v["provenance"], "limit_law");
        assert_eq!(v["probs"].as_array().unwrap().len(), 4);
        assert!(v["params"]["t"].as_f64().unwrap() == 1.0);
        assert!(v["params"]["p"].as_f64().unwrap() == 0.3);
        d.validate().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DistParams::new(-1.0, 0.3).is_err());
        assert!(DistParams::new(1.0, 1.0).is_err());
        assert!(DistParams::new(1.0, -0.1).is_err());
        assert!(DistParams::new(f64::NAN, 0.1).is_err());
    }
}
