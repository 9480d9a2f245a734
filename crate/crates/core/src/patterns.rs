//! Hit-pattern taxonomy: strictly increasing hit vectors decompose into
//! blocks of immediate returns (inter-hit gaps at most `M`, each a multiple
//! of the base period `m`) separated by long returns (gaps above `M`).
//! Counting bounds on the classes, the rare-set estimates, and the exact
//! verification of the cluster-factorization property on concrete systems.

use serde::Serialize;

use crate::dist::{factorial_moment, CountDistribution, DistParams, Kind};
use crate::error::{Error, Result};
use crate::numeric::{binomial_f64, binomial_u128, factorial_f64, NeumaierSum};
use crate::counting::{joint_pattern_measure, joint_pattern_measure_rational};
use crate::symbolic::{CylinderTarget, Measure, ShiftSystem};
use num_traits::{FromPrimitive, Zero};

/// A classified hit vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HitPattern {
    /// The strictly increasing hit offsets.
    pub v: Vec<u64>,
    /// Indices into `v` where blocks begin; the first entry is 0.
    pub block_heads: Vec<usize>,
    /// Within-block gap overlaps `(v_k - v_{k-1}) / m`, in block order;
    /// `None` marks a gap that is not a multiple of `m`.
    pub overlaps: Vec<Option<u64>>,
    /// Total overlap `w`; `None` when any individual overlap is invalid.
    pub total_overlap: Option<u64>,
    /// Minimal head-to-tail distance between successive blocks;
    /// `None` means +infinity (a single block).
    pub delta: Option<u64>,
}

impl HitPattern {
    pub fn block_count(&self) -> usize {
        self.block_heads.len()
    }

    /// True when every within-block gap is a multiple of `m`.
    pub fn valid_overlaps(&self) -> bool {
        self.total_overlap.is_some()
    }

    /// Rare means the shortest inter-block gap falls below `delta`.
    pub fn is_rare(&self, delta: u64) -> bool {
        self.delta.map_or(false, |d| d < delta)
    }

    /// The rare-set stratum index `s`: one plus the number of inter-block
    /// gaps that reach `delta`.
    pub fn stratum(&self, v_delta: u64) -> usize {
        let mut s = 1;
        for k in 1..self.block_heads.len() {
            let head = self.block_heads[k];
            if self.v[head] - self.v[head - 1] >= v_delta {
                s += 1;
            }
        }
        s
    }
}

/// Rare-set parameters: threshold `delta`, immediate-return horizon `M`,
/// and base period `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RareSetSpec {
    pub delta: u64,
    pub big_m: u64,
    pub m: u64,
}

impl RareSetSpec {
    pub fn new(delta: u64, big_m: u64, m: u64) -> Result<Self> {
        if delta < 1 {
            return Err(Error::invalid("delta must be at least 1"));
        }
        if m == 0 || m > big_m {
            return Err(Error::invalid("need 1 <= m <= M"));
        }
        Ok(RareSetSpec { delta, big_m, m })
    }
}

/// Classifies a strictly increasing hit vector into blocks, overlaps, and
/// the head-to-tail distance, with gaps at most `big_m` counting as
/// immediate returns.
pub fn classify(v: &[u64], big_m: u64, m: u64) -> Result<HitPattern> {
    if v.is_empty() {
        return Err(Error::invalid("hit vector must be nonempty"));
    }
    if m == 0 {
        return Err(Error::invalid("base period must be positive"));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("hit vector must be strictly increasing"));
    }
    let mut block_heads = vec![0usize];
    let mut overlaps = Vec::new();
    let mut total = Some(0u64);
    let mut delta: Option<u64> = None;
    for k in 1..v.len() {
        let gap = v[k] - v[k - 1];
        if gap > big_m {
            block_heads.push(k);
            delta = Some(delta.map_or(gap, |d| d.min(gap)));
        } else if gap % m == 0 {
            let w = gap / m;
            overlaps.push(Some(w));
            total = total.map(|t| t + w);
        } else {
            overlaps.push(None);
            total = None;
        }
    }
    Ok(HitPattern {
        v: v.to_vec(),
        block_heads,
        overlaps,
        total_overlap: total,
        delta,
    })
}

/// Number of hit vectors `C(tau, r)`.
pub fn pattern_count(tau: u64, r: u32) -> u128 {
    binomial_u128(tau, r as u64).unwrap_or(u128::MAX)
}

/// Iterator over all classified hit vectors with `r` entries in `[1, tau]`.
pub struct PatternIter {
    tau: u64,
    big_m: u64,
    m: u64,
    current: Vec<u64>,
    done: bool,
}

impl Iterator for PatternIter {
    type Item = HitPattern;

    fn next(&mut self) -> Option<HitPattern> {
        if self.done {
            return None;
        }
        let out = classify(&self.current, self.big_m, self.m)
            .expect("iterator produces valid vectors");
        // advance to the next combination in lexicographic order
        let r = self.current.len();
        let mut i = r;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.current[i] < self.tau - (r - 1 - i) as u64 {
                self.current[i] += 1;
                for j in i + 1..r {
                    self.current[j] = self.current[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Enumerates `G_r(tau)` (all increasing `r`-vectors in `[1, tau]`),
/// classified; errors when `C(tau, r)` exceeds the budget.
pub fn enumerate_patterns(
    tau: u64,
    r: u32,
    big_m: u64,
    m: u64,
    budget: u128,
) -> Result<PatternIter> {
    if r == 0 || tau < r as u64 {
        return Err(Error::invalid("need 1 <= r <= tau"));
    }
    let count = pattern_count(tau, r);
    if count > budget {
        return Err(Error::Budget {
            what: format!("pattern enumeration C({tau}, {r})"),
            needed: count,
            limit: budget,
            hint: "lower tau or r, or sample patterns".into(),
        });
    }
    Ok(PatternIter {
        tau,
        big_m,
        m,
        current: (1..=r as u64).collect(),
        done: false,
    })
}

/// Extended binomial with the conventions the class-counting formulas need:
/// `C(-1, -1) = 1`, `C(a, -1) = 0` for `a >= 0`, and 0 whenever `a < b`.
fn binom_ext(a: i64, b: i64) -> u128 {
    if b < 0 {
        return if a == b { 1 } else { 0 };
    }
    if a < b {
        return 0;
    }
    binomial_u128(a as u64, b as u64).unwrap_or(u128::MAX)
}

/// Upper bound on `|G_{r,j,u}|`: `tau^j / j! * C(u-1, r-j-1) * C(r-1, j-1)`
/// evaluated exactly and floored to an integer.
pub fn cardinality_bound(tau: u64, r: u32, j: u32, u: u64) -> Result<u128> {
    if j == 0 || j > r {
        return Err(Error::invalid("need 1 <= j <= r"));
    }
    if (u as i64) < (r as i64 - j as i64) {
        return Err(Error::invalid("total overlap must be at least r - j"));
    }
    let tau_pow = (tau as u128)
        .checked_pow(j)
        .ok_or_else(|| Error::invalid("tau^j overflows"))?;
    let c1 = binom_ext(u as i64 - 1, r as i64 - j as i64 - 1);
    let c2 = binom_ext(r as i64 - 1, j as i64 - 1);
    let fact: u128 = (1..=j as u128).product();
    tau_pow
        .checked_mul(c1)
        .and_then(|x| x.checked_mul(c2))
        .map(|x| x / fact)
        .ok_or_else(|| Error::invalid("cardinality bound overflows"))
}

/// Upper bound on `|R^s_{r,j,u}|`:
/// `C(j-1, s-1) delta^{j-s} / s! * tau^s * C(r-1, j-1) * C(u-1, r-j-1)`.
pub fn rare_cardinality_bound(
    tau: u64,
    r: u32,
    j: u32,
    s: u32,
    u: u64,
    delta: u64,
) -> Result<u128> {
    if !(1 <= s && s <= j.saturating_sub(1) && j <= r) {
        return Err(Error::invalid("need 1 <= s <= j - 1 <= r - 1"));
    }
    let c_js = binom_ext(j as i64 - 1, s as i64 - 1);
    let c_rj = binom_ext(r as i64 - 1, j as i64 - 1);
    let c_u = binom_ext(u as i64 - 1, r as i64 - j as i64 - 1);
    let delta_pow = (delta as u128)
        .checked_pow(j - s)
        .ok_or_else(|| Error::invalid("delta^{j-s} overflows"))?;
    let tau_pow = (tau as u128)
        .checked_pow(s)
        .ok_or_else(|| Error::invalid("tau^s overflows"))?;
    let fact: u128 = (1..=s as u128).product();
    c_js.checked_mul(delta_pow)
        .and_then(|x| x.checked_mul(tau_pow))
        .and_then(|x| x.checked_mul(c_rj))
        .and_then(|x| x.checked_mul(c_u))
        .map(|x| x / fact)
        .ok_or_else(|| Error::invalid("rare cardinality bound overflows"))
}

/// Aggregated rare-set measure bound:
/// `c alpha^{r-1} sum_{j=2}^r sum_{s=1}^{j-1} C(j-1,s-1) (delta mu_n)^{j-s}
///  (tau mu_n)^s / s! C(r-1,j-1) (alpha mu_m)^{r-j}`.
pub fn rare_set_measure_bound(
    tau: u64,
    r: u32,
    delta: u64,
    mu_n: f64,
    mu_m: f64,
    alpha: f64,
    c: f64,
) -> f64 {
    let mut sum = NeumaierSum::new();
    for j in 2..=r {
        for s in 1..=j - 1 {
            let term = binomial_f64(j as u64 - 1, s as u64 - 1)
                * (delta as f64 * mu_n).powi((j - s) as i32)
                * (tau as f64 * mu_n).powi(s as i32)
                / factorial_f64(s as u64)
                * binomial_f64(r as u64 - 1, j as u64 - 1)
                * (alpha * mu_m).powi((r - j) as i32);
            sum.add(term);
        }
    }
    c * alpha.powi(r as i32 - 1) * sum.total()
}

/// `sum_{y=b}^{a} C(y-1, b-1)`, exactly.
pub fn binomial_column_sum(a: u64, b: u64) -> u128 {
    (b..=a).map(|y| binom_ext(y as i64 - 1, b as i64 - 1)).sum()
}

/// `sum_{u>=a} p^u C(u-1, a-1)` by adaptive truncation; the closed form is
/// `(p/(1-p))^a`.
pub fn geometric_binomial_tail(p: f64, a: u32, rel_tol: f64) -> f64 {
    assert!((0.0..1.0).contains(&p) && a >= 1);
    let mut sum = NeumaierSum::new();
    // running term p^u C(u-1, a-1), updated by the ratio recurrence
    let mut term = p.powi(a as i32); // u = a: C(a-1, a-1) = 1
    let mut u = a as u64;
    loop {
        sum.add(term);
        u += 1;
        // C(u-1, a-1) = C(u-2, a-1) * (u-1) / (u-a)
        term *= p * (u - 1) as f64 / (u - a as u64) as f64;
        if u > 10_000_000 || (term / sum.total().max(f64::MIN_POSITIVE)) < rel_tol && u > 4 * a as u64 + 64 {
            break;
        }
    }
    sum.total()
}

/// Truncation of
/// `sum_{r>=2} sum_{j=2}^{r} sum_{s=1}^{j-1} C(j-1,s-1) x^s/s! C(r-1,j-1)
///  y^{j-s} z^{r-j}`; the closed form is `exp(x/(1-y-z)) - exp(x/(1-z))`.
pub fn triple_sum_truncated(x: f64, y: f64, z: f64, rel_tol: f64) -> f64 {
    let mut sum = NeumaierSum::new();
    for r in 2..400u32 {
        let mut layer = NeumaierSum::new();
        for j in 2..=r {
            for s in 1..=j - 1 {
                layer.add(
                    binomial_f64(j as u64 - 1, s as u64 - 1) * x.powi(s as i32)
                        / factorial_f64(s as u64)
                        * binomial_f64(r as u64 - 1, j as u64 - 1)
                        * y.powi((j - s) as i32)
                        * z.powi((r - j) as i32),
                );
            }
        }
        let l = layer.total();
        sum.add(l);
        if r > 8 && l.abs() < rel_tol * sum.total().abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    sum.total()
}

/// One offending pattern in a condition report.
#[derive(Debug, Clone, Serialize)]
pub struct PatternWitness {
    pub v: Vec<u64>,
    pub blocks: usize,
    pub total_overlap: Option<u64>,
    pub expected: f64,
    pub model: f64,
    pub deviation: f64,
    pub allowed: f64,
}

/// Outcome of the cluster-factorization check over a pattern family.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionIiReport {
    pub tau: u64,
    pub r_max: u32,
    pub delta: u64,
    pub big_m: u64,
    pub m: u64,
    pub beta: f64,
    pub p: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub phi: f64,
    pub c0: f64,
    /// Number of patterns examined (full enumeration or sample).
    pub checked: u64,
    /// Fraction of `sum_r C(tau, r)` that was examined.
    pub coverage: f64,
    pub sampled: bool,
    pub rare_skipped: u64,
    pub invalid_overlap: u64,
    pub max_abs_deviation: f64,
    /// Maximum of `deviation - allowed`; nonpositive means the condition held.
    pub max_exceedance: f64,
    /// Invalid-overlap patterns whose joint measure was not exactly zero.
    pub zero_violations: u64,
    pub witnesses: Vec<PatternWitness>,
    pub pass: bool,
}

const MAX_WITNESSES: usize = 16;

/// Verifies the cluster-factorization property on a concrete target: for
/// every non-rare pattern with valid overlaps,
/// `|E(eta_v) - p^w beta^j| <= c0 beta^j (p_+^w - p_-^w) + p^w ((1+phi)^j - 1)`,
/// and every invalid-overlap pattern has joint measure exactly zero.
///
/// `delta` defaults to `n` so non-rare blocks occupy disjoint windows.
/// Enumeration is exhaustive while `sum C(tau, r)` stays within `budget`,
/// otherwise a deterministic seeded sample of `sample_size` patterns per r.
#[allow(clippy::too_many_arguments)]
pub fn verify_condition_ii(
    system: &ShiftSystem,
    measure: &Measure,
    target: &CylinderTarget,
    tau: u64,
    r_max: u32,
    delta: Option<u64>,
    phi: f64,
    c0: f64,
    budget: u128,
    sample_size: u64,
    seed: u64,
) -> Result<ConditionIiReport> {
    use rand::Rng;
    use rand::SeedableRng;

    let n = target.len() as u64;
    let m = target.period() as u64;
    let big_m = target.immediate_horizon() as u64;
    if big_m == 0 {
        return Err(Error::invalid(
            "target needs n > m so immediate returns exist",
        ));
    }
    let delta = delta.unwrap_or(n);
    let beta = target.mu();
    let p = target.p();
    let p_plus = p + target.q_n();
    let p_minus = p - target.q_n();

    let mut report = ConditionIiReport {
        tau,
        r_max,
        delta,
        big_m,
        m,
        beta,
        p,
        p_plus,
        p_minus,
        phi,
        c0,
        checked: 0,
        coverage: 0.0,
        sampled: false,
        rare_skipped: 0,
        invalid_overlap: 0,
        max_abs_deviation: 0.0,
        max_exceedance: f64::NEG_INFINITY,
        zero_violations: 0,
        witnesses: Vec::new(),
        pass: true,
    };

    let mut total_patterns: u128 = 0;
    let handle = |pattern: &HitPattern, report: &mut ConditionIiReport| -> Result<()> {
        report.checked += 1;
        if pattern.is_rare(delta) {
            report.rare_skipped += 1;
            return Ok(());
        }
        let expected = joint_pattern_measure(system, measure, target.word(), &pattern.v)?;
        if !pattern.valid_overlaps() {
            report.invalid_overlap += 1;
            if expected != 0.0 {
                report.zero_violations += 1;
                report.pass = false;
                if report.witnesses.len() < MAX_WITNESSES {
                    report.witnesses.push(PatternWitness {
                        v: pattern.v.clone(),
                        blocks: pattern.block_count(),
                        total_overlap: None,
                        expected,
                        model: 0.0,
                        deviation: expected,
                        allowed: 0.0,
                    });
                }
            }
            return Ok(());
        }
        let j = pattern.block_count() as i32;
        let w = pattern.total_overlap.unwrap() as i32;
        let model = p.powi(w) * beta.powi(j);
        let deviation = (expected - model).abs();
        let allowed = c0 * beta.powi(j) * (p_plus.powi(w) - p_minus.powi(w))
            + p.powi(w) * ((1.0 + phi).powi(j) - 1.0);
        report.max_abs_deviation = report.max_abs_deviation.max(deviation);
        report.max_exceedance = report.max_exceedance.max(deviation - allowed);
        if deviation > allowed {
            report.pass = false;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(PatternWitness {
                    v: pattern.v.clone(),
                    blocks: pattern.block_count(),
                    total_overlap: pattern.total_overlap,
                    expected,
                    model,
                    deviation,
                    allowed,
                });
            }
        }
        Ok(())
    };

    for r in 1..=r_max {
        let count = pattern_count(tau, r);
        total_patterns += count;
        if count <= budget {
            for pattern in enumerate_patterns(tau, r, big_m, m, budget)? {
                handle(&pattern, &mut report)?;
            }
        } else {
            report.sampled = true;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (r as u64));
            for _ in 0..sample_size {
                // sorted sample without replacement
                let mut v: Vec<u64> = Vec::with_capacity(r as usize);
                while v.len() < r as usize {
                    let x = rng.gen_range(1..=tau);
                    if !v.contains(&x) {
                        v.push(x);
                    }
                }
                v.sort_unstable();
                let pattern = classify(&v, big_m, m)?;
                handle(&pattern, &mut report)?;
            }
        }
    }
    report.coverage = if total_patterns == 0 {
        1.0
    } else {
        report.checked as f64 / total_patterns as f64
    };
    if !report.max_exceedance.is_finite() {
        // no regular pattern was examined; nothing exceeded anything
        report.max_exceedance = 0.0;
    }
    Ok(report)
}

/// Exact-arithmetic variant of the factorization check for Bernoulli
/// measures: non-rare valid patterns must satisfy
/// `E(eta_v) == p^w beta^j` as exact rationals, and invalid-overlap
/// patterns must have measure exactly zero. Returns the number of patterns
/// checked; errors on the first violation.
pub fn verify_condition_ii_exact_bernoulli(
    system: &ShiftSystem,
    measure: &Measure,
    target: &CylinderTarget,
    tau: u64,
    r_max: u32,
    delta: Option<u64>,
    budget: u128,
) -> Result<u64> {
    use num_rational::BigRational;

    let weights = match measure {
        Measure::Bernoulli { weights } => weights,
        _ => return Err(Error::invalid("exact tier requires a Bernoulli measure")),
    };
    let n = target.len() as u64;
    let m = target.period();
    let big_m = target.immediate_horizon() as u64;
    let delta = delta.unwrap_or(n);
    let word = target.word();
    let beta: BigRational = word
        .iter()
        .map(|&s| BigRational::from_f64(weights[s as usize]).unwrap())
        .product();
    let p_block: BigRational = (0..m)
        .map(|i| BigRational::from_f64(weights[word[i] as usize]).unwrap())
        .product();
    let mut checked = 0u64;
    for r in 1..=r_max {
        for pattern in enumerate_patterns(tau, r, big_m, m as u64, budget)? {
            if pattern.is_rare(delta) {
                continue;
            }
            let expected =
                joint_pattern_measure_rational(system, measure, word, &pattern.v)?;
            checked += 1;
            if let Some(w) = pattern.total_overlap {
                let j = pattern.block_count();
                let mut model = BigRational::from_f64(1.0).unwrap();
                for _ in 0..w {
                    model *= &p_block;
                }
                for _ in 0..j {
                    model *= &beta;
                }
                if expected != model {
                    return Err(Error::invalid(format!(
                        "pattern {:?}: E(eta) != p^w beta^j exactly",
                        pattern.v
                    )));
                }
            } else if !expected.is_zero() {
                return Err(Error::invalid(format!(
                    "invalid-overlap pattern {:?} has nonzero measure",
                    pattern.v
                )));
            }
        }
    }
    Ok(checked)
}

/// Residuals `|U_r - Q_r(t, p)|` for `r = 0..=k_max`, where `U_r` is the
/// `r`-th factorial moment of the exact count distribution. The tail bucket
/// is not included in `U_r`, so `r_max` should be large enough that the
/// tail mass is negligible.
pub fn compare_factorial_moments(
    dist: &CountDistribution,
    params: DistParams,
    k_max: u32,
) -> Vec<f64> {
    (0..=k_max)
        .map(|k| (dist.factorial_moment(k) - factorial_moment(k, params, Kind::Entry)).abs())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{exact_entry_with_tau, DpBudget};
    use std::collections::HashMap;

    #[test]
    fn classify_examples() {
        // two blocks {1,3,5} and {40}: within gaps 2,2 at m=2 give w=2
        let p = classify(&[1, 3, 5, 40], 10, 2).unwrap();
        assert_eq!(p.block_heads, vec![0, 3]);
        assert_eq!(p.total_overlap, Some(2));
        assert_eq!(p.delta, Some(35));
        // single hit: one block, no overlap, delta = +infinity
        let p = classify(&[1], 10, 2).unwrap();
        assert_eq!(p.block_count(), 1);
        assert_eq!(p.total_overlap, Some(0));
        assert_eq!(p.delta, None);
        assert!(!p.is_rare(1_000_000));
        // within-block gap 1 is not a multiple of m=2
        let p = classify(&[1, 2], 10, 2).unwrap();
        assert!(!p.valid_overlaps());
        assert_eq!(p.overlaps, vec![None]);
        // malformed input
        assert!(classify(&[3, 3], 10, 1).is_err());
        assert!(classify(&[], 10, 1).is_err());
    }

    #[test]
    fn enumerate_counts_and_budget() {
        let pats: Vec<_> = enumerate_patterns(5, 2, 2, 1, 1 << 20).unwrap().collect();
        assert_eq!(pats.len(), 10);
        let pats: Vec<_> = enumerate_patterns(3, 3, 2, 1, 1 << 20).unwrap().collect();
        assert_eq!(pats.len(), 1);
        assert_eq!(pats[0].v, vec![1, 2, 3]);
        assert!(enumerate_patterns(100, 40, 2, 1, 1 << 20).is_err());
    }

    #[test]
    fn partition_property_and_bound_domination() {
        let tau = 30u64;
        let big_m = 6u64;
        let m = 1u64;
        let delta = 8u64;
        for r in 1..=4u32 {
            let mut by_j: HashMap<usize, u128> = HashMap::new();
            let mut by_jw: HashMap<(usize, u64), u128> = HashMap::new();
            let mut rare_by_sju: HashMap<(usize, usize, u64), u128> = HashMap::new();
            let mut total = 0u128;
            for p in enumerate_patterns(tau, r, big_m, m, 1 << 24).unwrap() {
                total += 1;
                *by_j.entry(p.block_count()).or_default() += 1;
                let w = p.total_overlap.expect("m = 1 never invalidates");
                *by_jw.entry((p.block_count(), w)).or_default() += 1;
                if p.is_rare(delta) {
                    *rare_by_sju
                        .entry((p.stratum(delta), p.block_count(), w))
                        .or_default() += 1;
                }
            }
            assert_eq!(total, pattern_count(tau, r));
            assert_eq!(by_j.values().sum::<u128>(), total);
            assert_eq!(by_jw.values().sum::<u128>(), total);
            for (&(j, u), &count) in &by_jw {
                let bound = cardinality_bound(tau, r, j as u32, u).unwrap();
                assert!(
                    count <= bound,
                    "r={r} j={j} u={u}: count {count} > bound {bound}"
                );
            }
            for (&(s, j, u), &count) in &rare_by_sju {
                let bound =
                    rare_cardinality_bound(tau, r, j as u32, s as u32, u, delta).unwrap();
                assert!(
                    count <= bound,
                    "r={r} s={s} j={j} u={u}: {count} > {bound}"
                );
            }
        }
    }

    #[test]
    fn partition_property_period_two() {
        // with m = 2 the (j, w) split covers only valid-overlap patterns;
        // the j-partition still covers everything
        let tau = 20u64;
        let r = 3u32;
        let mut total = 0u128;
        let mut valid = 0u128;
        let mut by_j = 0u128;
        for p in enumerate_patterns(tau, r, 6, 2, 1 << 24).unwrap() {
            total += 1;
            by_j += 1;
            if p.valid_overlaps() {
                valid += 1;
            }
        }
        assert_eq!(total, pattern_count(tau, r));
        assert_eq!(by_j, total);
        assert!(valid < total);
    }

    #[test]
    fn cardinality_bound_edges() {
        // j = r, u = 0: bound is floor(tau^r / r!)
        let b = cardinality_bound(30, 3, 3, 0).unwrap();
        assert_eq!(b, 27000 / 6);
        // j = r with positive u is impossible: C(u-1, -1) = 0
        assert_eq!(cardinality_bound(30, 3, 3, 5).unwrap(), 0);
        // r = 1, j = 1, u = 0: bound is tau >= |G_1| = tau
        assert_eq!(cardinality_bound(30, 1, 1, 0).unwrap(), 30);
        assert!(cardinality_bound(30, 3, 0, 0).is_err());
        assert!(cardinality_bound(30, 3, 1, 0).is_err());
    }

    #[test]
    fn rare_measure_bound_dominates_exact_sum() {
        // sum of exact joint measures over the rare set vs the aggregate bound
        let sys = ShiftSystem::full(2).unwrap();
        let meas = Measure::bernoulli(vec![0.3, 0.7]).unwrap();
        let target = CylinderTarget::periodic(&sys, &meas, &[0], 2).unwrap();
        let tau = 30u64;
        let delta = 8u64;
        let big_m = target.immediate_horizon() as u64;
        let mu_m = cylinder_measure_of_period(&sys, &meas, &target);
        for r in 2..=3u32 {
            let mut exact = NeumaierSum::new();
            for p in enumerate_patterns(tau, r, big_m, 1, 1 << 24).unwrap() {
                if p.is_rare(delta) {
                    exact.add(
                        joint_pattern_measure(&sys, &meas, target.word(), &p.v).unwrap(),
                    );
                }
            }
            let bound =
                rare_set_measure_bound(tau, r, delta, target.mu(), mu_m, 1.0, 1.0);
            assert!(
                exact.total() <= bound,
                "r={r}: exact {} > bound {bound}",
                exact.total()
            );
        }
    }

    fn cylinder_measure_of_period(
        sys: &ShiftSystem,
        meas: &Measure,
        target: &CylinderTarget,
    ) -> f64 {
        crate::symbolic::cylinder_measure(sys, meas, &target.word()[..target.period()])
    }

    #[test]
    fn binomial_identities() {
        for a in 1..=12u64 {
            for b in 1..=a {
                let lhs = binomial_column_sum(a, b);
                let rhs = binomial_u128(a, b).unwrap();
                assert_eq!(lhs, rhs, "a={a} b={b}");
            }
        }
        for &p in &[0.1, 0.5, 0.9] {
            for a in 1..=12u32 {
                let got = geometric_binomial_tail(p, a, 1e-14);
                let expect = (p / (1.0 - p)).powi(a as i32);
                assert!(
                    (got / expect - 1.0).abs() < 1e-9,
                    "p={p} a={a}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn triple_sum_identity() {
        for &(x, y, z) in &[(0.5, 0.2, 0.1), (2.0, 0.25, 0.25), (1.0, 0.05, 0.4)] {
            let got = triple_sum_truncated(x, y, z, 1e-15);
            let expect = (x / (1.0 - y - z)).exp() - (x / (1.0 - z)).exp();
            assert!(
                (got / expect - 1.0).abs() < 1e-9,
                "x={x} y={y} z={z}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn condition_ii_exact_on_bernoulli() {
        let sys = ShiftSystem::full(2).unwrap();
        let meas = Measure::bernoulli(vec![0.3, 0.7]).unwrap();
        let target = CylinderTarget::periodic(&sys, &meas, &[0], 2).unwrap();
        let report = verify_condition_ii(
            &sys, &meas, &target, 20, 3, None, 0.0, 1.0, 1 << 22, 0, 0,
        )
        .unwrap();
        assert!(report.pass, "max exceedance {}", report.max_exceedance);
        assert_eq!(report.zero_violations, 0);
        assert!(report.max_abs_deviation < 1e-15);
        assert!(!report.sampled);
        assert!((report.coverage - 1.0).abs() < 1e-12);

        let checked = verify_condition_ii_exact_bernoulli(
            &sys, &meas, &target, 20, 3, None, 1 << 22,
        )
        .unwrap();
        assert!(checked > 0);
    }

    #[test]
    fn condition_ii_hand_values() {
        let sys = ShiftSystem::full(2).unwrap();
        let meas = Measure::bernoulli(vec![0.3, 0.7]).unwrap();
        let target = CylinderTarget::periodic(&sys, &meas, &[0], 2).unwrap();
        // two isolated hits: E = beta^2 = 0.09^2
        let e = joint_pattern_measure(&sys, &meas, target.word(), &[1, 20]).unwrap();
        assert!((e - 0.0081).abs() < 1e-15);
        // overlap 1 at m=1: single block, w=1: E = mu("000") = p^1 beta^1
        let e = joint_pattern_measure(&sys, &meas, target.word(), &[1, 2]).unwrap();
        assert!((e - 0.027).abs() < 1e-16);
        // invalid overlap near an m=2 target
        let t2 = CylinderTarget::periodic(&sys, &meas, &[0, 1], 4).unwrap();
        let e = joint_pattern_measure(&sys, &meas, t2.word(), &[1, 2]).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn condition_ii_markov_bounded() {
        let sys = ShiftSystem::full(2).unwrap();
        let meas = Measure::markov(vec![0.9, 0.1, 0.2, 0.8], 2).unwrap();
        let target = CylinderTarget::periodic(&sys, &meas, &[0], 2).unwrap();
        let delta = target.len() as u64 + 2;
        // phi at the worst-case separation delta - n
        let phi = crate::symbolic::measured_phi(
            &sys,
            &meas,
            target.len(),
            delta - target.len() as u64,
            &crate::symbolic::PairFamily::All,
        )
        .unwrap();
        let report = verify_condition_ii(
            &sys,
            &meas,
            &target,
            24,
            3,
            Some(delta),
            phi,
            1.0,
            1 << 22,
            0,
            0,
        )
        .unwrap();
        assert!(
            report.pass,
            "max deviation {} exceedance {}",
            report.max_abs_deviation, report.max_exceedance
        );
    }

    #[test]
    fn sampled_verification_reports_coverage() {
        let sys = ShiftSystem::full(2).unwrap();
        let meas = Measure::bernoulli(vec![0.3, 0.7]).unwrap();
        let target = CylinderTarget::periodic(&sys, &meas, &[0], 2).unwrap();
        let report = verify_condition_ii(
            &sys, &meas, &target, 200, 3, None, 0.0, 1.0, 1000, 500, 42,
        )
        .unwrap();
        assert!(report.sampled);
        assert!(report.coverage < 1.0);
        assert!(report.pass);
    }

    #[test]
    fn factorial_moment_comparison_shrinks_with_n() {
        let sys = ShiftSystem::full(2).unwrap();
        let meas = Measure::bernoulli(vec![0.3, 0.7]).unwrap();
        let t = 1.0;
        let mut u2_errors = Vec::new();
        for n in [4usize, 8] {
            let target = CylinderTarget::periodic(&sys, &meas, &[0], n).unwrap();
            let d = exact_entry_with_tau(
                &sys,
                &meas,
                target.word(),
                target.tau(t),
                30,
                &DpBudget::default(),
            )
            .unwrap();
            let params = DistParams::new(t, target.p()).unwrap();
            let res = compare_factorial_moments(&d, params, 3);
            assert!(res[0] < 1e-10); // U_0 = Q_0 = 1 up to the retained tail
            // U_1 = tau mu equals Q_1 = t/(1-p) up to floor effects <= mu
            assert!(res[1] <= target.mu() + 1e-12);
            u2_errors.push(res[2]);
            // closer to the compound-Poisson Q_2 than to the Poisson moment t^2/2
            let poisson_gap = (d.factorial_moment(2) - t * t / 2.0).abs();
            assert!(res[2] < poisson_gap);
        }
        assert!(u2_errors[1] < u2_errors[0]);
    }
}
