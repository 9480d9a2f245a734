//! Exact and Monte Carlo distributions of the visit-counting functions:
//! the number of window positions `j in [1, tau]` at which the orbit sits
//! in the target cylinder, unconditioned (entry) or conditioned on starting
//! inside the cylinder (return).
//!
//! The exact engine is a layered dynamic program over (pattern-automaton
//! state, previous symbol, capped count). The window convention: a hit at
//! offset `j` means the pattern occupies string coordinates `j..j+n-1`, so
//! the automaton accepting at stream index `j+n-1` maps to hit index `j`.
//! The brute-force enumerator uses the same convention and must agree to
//! 1e-12; that agreement is the acceptance gate for the convention.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dist::{CountDistribution, CountParams, Provenance};
use crate::error::{Error, Result};
use crate::numeric::{mat_pow, NeumaierSum};
use crate::symbolic::{cylinder_measure, CylinderTarget, Measure, ShiftSystem, Symbol};

/// Deterministic finite automaton tracking the longest suffix of the stream
/// that is a prefix of the pattern; state `n` accepts (full match), and
/// stepping from it follows the failure structure so overlapping matches
/// are all reported.
#[derive(Debug, Clone)]
pub struct PatternAutomaton {
    pattern: Vec<Symbol>,
    alphabet: usize,
    delta: Vec<u32>, // (n+1) x alphabet, row-major
}

impl PatternAutomaton {
    pub fn new(pattern: &[Symbol], alphabet: usize) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::invalid("pattern must be nonempty"));
        }
        if pattern.iter().any(|&s| s as usize >= alphabet) {
            return Err(Error::invalid("pattern uses symbols outside the alphabet"));
        }
        let n = pattern.len();
        // failure function: fail[i] = length of the longest proper border of pattern[..i]
        let mut fail = vec![0usize; n + 1];
        for i in 1..n {
            let mut j = fail[i];
            while j > 0 && pattern[i] != pattern[j] {
                j = fail[j];
            }
            fail[i + 1] = if pattern[i] == pattern[j] { j + 1 } else { 0 };
        }
        let mut delta = vec![0u32; (n + 1) * alphabet];
        for q in 0..=n {
            for a in 0..alphabet {
                delta[q * alphabet + a] = if q < n && pattern[q] as usize == a {
                    (q + 1) as u32
                } else if q == 0 {
                    0
                } else {
                    delta[fail[q] * alphabet + a]
                };
            }
        }
        Ok(PatternAutomaton {
            pattern: pattern.to_vec(),
            alphabet,
            delta,
        })
    }

    pub fn pattern(&self) -> &[Symbol] {
        &self.pattern
    }

    pub fn accept_state(&self) -> u32 {
        self.pattern.len() as u32
    }

    #[inline]
    pub fn step(&self, state: u32, symbol: Symbol) -> u32 {
        self.delta[state as usize * self.alphabet + symbol as usize]
    }

    /// Number of hit offsets `j >= 1` in a finite stream, i.e. accepts at
    /// stream indices `>= n` under the window convention above.
    pub fn count_hits(&self, stream: &[Symbol]) -> u64 {
        let n = self.pattern.len();
        let mut state = 0u32;
        let mut hits = 0u64;
        for (i, &s) in stream.iter().enumerate() {
            state = self.step(state, s);
            if state == self.accept_state() && i >= n {
                hits += 1;
            }
        }
        hits
    }
}

/// Cell budget for the exact dynamic program; `cells` is
/// `(n+1) * alphabet * (r_max+2) * steps`.
#[derive(Debug, Clone, Copy)]
pub struct DpBudget {
    pub max_cells: u128,
}

impl Default for DpBudget {
    fn default() -> Self {
        // roughly a few seconds of work on one core
        DpBudget {
            max_cells: 4_000_000_000,
        }
    }
}

struct CountDp<'a> {
    aut: &'a PatternAutomaton,
    measure: &'a Measure,
    k: usize,
    rdim: usize,
    cur: Vec<f64>,
    cur_c: Vec<f64>,
    nxt: Vec<f64>,
    nxt_c: Vec<f64>,
}

impl<'a> CountDp<'a> {
    fn new(aut: &'a PatternAutomaton, measure: &'a Measure, r_max: usize) -> Self {
        let k = measure.alphabet_size();
        let states = aut.pattern.len() + 1;
        let rdim = r_max + 2; // counts 0..=r_max plus an overflow bucket
        let len = states * k * rdim;
        CountDp {
            aut,
            measure,
            k,
            rdim,
            cur: vec![0.0; len],
            cur_c: vec![0.0; len],
            nxt: vec![0.0; len],
            nxt_c: vec![0.0; len],
        }
    }

    #[inline]
    fn idx(&self, q: u32, c: Symbol, r: usize) -> usize {
        (q as usize * self.k + c as usize) * self.rdim + r
    }

    #[inline]
    fn accumulate(&mut self, idx: usize, x: f64) {
        // Neumaier-compensated accumulation into the next layer
        let s = self.nxt[idx];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.nxt_c[idx] += (s - t) + x;
        } else {
            self.nxt_c[idx] += (x - t) + s;
        }
        self.nxt[idx] = t;
    }

    /// One DP step: draw the next symbol, advance the automaton, and bump
    /// the count on accepts when `counting` is set.
    fn step(&mut self, counting: bool) {
        self.nxt.iter_mut().for_each(|x| *x = 0.0);
        self.nxt_c.iter_mut().for_each(|x| *x = 0.0);
        let accept = self.aut.accept_state();
        let states = self.aut.pattern.len() + 1;
        for q in 0..states as u32 {
            for c in 0..self.k as u8 {
                let base = self.idx(q, c, 0);
                for b in 0..self.k as u8 {
                    let w = self.measure.step(c, b);
                    if w == 0.0 {
                        continue;
                    }
                    let q2 = self.aut.step(q, b);
                    let bump = counting && q2 == accept;
                    for r in 0..self.rdim {
                        let mass = self.cur[base + r] + self.cur_c[base + r];
                        if mass == 0.0 {
                            continue;
                        }
                        let r2 = if bump { (r + 1).min(self.rdim - 1) } else { r };
                        self.accumulate(self.idx(q2, b, r2), w * mass);
                    }
                }
            }
        }
        std::mem::swap(&mut self.cur, &mut self.nxt);
        std::mem::swap(&mut self.cur_c, &mut self.nxt_c);
    }

    fn finish(&self, r_max: usize) -> (Vec<f64>, f64) {
        let mut sums = vec![NeumaierSum::new(); self.rdim];
        let states = self.aut.pattern.len() + 1;
        for q in 0..states as u32 {
            for c in 0..self.k as u8 {
                for r in 0..self.rdim {
                    let i = self.idx(q, c, r);
                    sums[r].add(self.cur[i] + self.cur_c[i]);
                }
            }
        }
        let probs: Vec<f64> = (0..=r_max).map(|r| sums[r].total().max(0.0)).collect();
        let tail = sums[self.rdim - 1].total().max(0.0);
        (probs, tail)
    }
}

fn check_dp_budget(n: usize, k: usize, r_max: usize, steps: u64, budget: &DpBudget) -> Result<()> {
    let cells = (n as u128 + 1) * k as u128 * (r_max as u128 + 2) * steps as u128;
    if cells > budget.max_cells {
        return Err(Error::Budget {
            what: "exact count DP".into(),
            needed: cells,
            limit: budget.max_cells,
            hint: "raise the budget or use monte_carlo_distribution".into(),
        });
    }
    Ok(())
}

fn point_mass(r_max: usize, params: CountParams, provenance: Provenance) -> CountDistribution {
    let mut probs = vec![0.0; r_max + 1];
    probs[0] = 1.0;
    CountDistribution {
        probs,
        tail_mass: 0.0,
        provenance,
        sample_count: 0,
        params,
    }
}

/// Exact distribution of the entry count for an arbitrary word at an
/// explicit observation time. The orbit starts from the stationary law;
/// hits are counted at offsets `1..=tau`.
pub fn exact_entry_with_tau(
    system: &ShiftSystem,
    measure: &Measure,
    word: &[Symbol],
    tau: u64,
    r_max: usize,
    budget: &DpBudget,
) -> Result<CountDistribution> {
    measure.compatible_with(system)?;
    let params = CountParams {
        t: None,
        p: None,
        n: word.len(),
        tau,
    };
    if tau == 0 {
        return Ok(point_mass(r_max, params, Provenance::Exact));
    }
    let aut = PatternAutomaton::new(word, system.alphabet_size())?;
    let n = word.len();
    let steps = tau + n as u64 - 1;
    check_dp_budget(n, measure.alphabet_size(), r_max, steps, budget)?;
    let mut dp = CountDp::new(&aut, measure, r_max);
    for a in 0..measure.alphabet_size() as u8 {
        let q = aut.step(0, a);
        let i = dp.idx(q, a, 0);
        dp.cur[i] = measure.marginal(a);
    }
    for i in 1..=steps {
        dp.step(i >= n as u64);
    }
    let (probs, tail_mass) = dp.finish(r_max);
    Ok(CountDistribution {
        probs,
        tail_mass,
        provenance: Provenance::Exact,
        sample_count: 0,
        params,
    })
}

/// Exact distribution of the return count for an arbitrary word: the start
/// is conditioned on the cylinder (automaton in the accept state, chain in
/// the last pattern symbol) and hits are counted at offsets `1..=tau`.
pub fn exact_return_with_tau(
    system: &ShiftSystem,
    measure: &Measure,
    word: &[Symbol],
    tau: u64,
    r_max: usize,
    budget: &DpBudget,
) -> Result<CountDistribution> {
    measure.compatible_with(system)?;
    if cylinder_measure(system, measure, word) == 0.0 {
        return Err(Error::invalid(
            "cannot condition on a measure-zero cylinder",
        ));
    }
    let params = CountParams {
        t: None,
        p: None,
        n: word.len(),
        tau,
    };
    if tau == 0 {
        return Ok(point_mass(r_max, params, Provenance::Exact));
    }
    let aut = PatternAutomaton::new(word, system.alphabet_size())?;
    let n = word.len();
    check_dp_budget(n, measure.alphabet_size(), r_max, tau, budget)?;
    let mut dp = CountDp::new(&aut, measure, r_max);
    let last = word[n - 1];
    let i = dp.idx(aut.accept_state(), last, 0);
    dp.cur[i] = 1.0;
    for _ in 1..=tau {
        dp.step(true);
    }
    let (probs, tail_mass) = dp.finish(r_max);
    Ok(CountDistribution {
        probs,
        tail_mass,
        provenance: Provenance::Exact,
        sample_count: 0,
        params,
    })
}

fn with_target_params(
    mut dist: CountDistribution,
    target: &CylinderTarget,
    t: f64,
) -> CountDistribution {
    dist.params.t = Some(t);
    dist.params.p = Some(target.p());
    dist
}

/// Exact entry-count distribution at rescaled time `t`, with
/// `tau = floor(t / ((1-p) mu(A_n)))` taken from the target.
pub fn exact_entry_distribution(
    system: &ShiftSystem,
    measure: &Measure,
    target: &CylinderTarget,
    t: f64,
    r_max: usize,
    budget: &DpBudget,
) -> Result<CountDistribution> {
    let tau = target.tau(t);
    let d = exact_entry_with_tau(system, measure, target.word(), tau, r_max, budget)?;
    Ok(with_target_params(d, target, t))
}

/// Exact return-count distribution at rescaled time `t`, conditioned on the
/// target cylinder.
pub fn exact_return_distribution(
    system: &ShiftSystem,
    measure: &Measure,
    target: &CylinderTarget,
    t: f64,
    r_max: usize,
    budget: &DpBudget,
) -> Result<CountDistribution> {
    let tau = target.tau(t);
    let d = exact_return_with_tau(system, measure, target.word(), tau, r_max, budget)?;
    Ok(with_target_params(d, target, t))
}

/// Independent oracle: enumerates every string of length `tau + n`, weights
/// it by its exact measure, and counts pattern occurrences at offsets
/// `1..=tau`. Budgeted by `alphabet^(tau+n) <= max_strings`.
pub fn brute_force_distribution(
    system: &ShiftSystem,
    measure: &Measure,
    word: &[Symbol],
    tau: u64,
    r_max: usize,
    max_strings: u128,
) -> Result<CountDistribution> {
    measure.compatible_with(system)?;
    if word.is_empty() {
        return Err(Error::invalid("pattern must be nonempty"));
    }
    let n = word.len();
    let k = measure.alphabet_size();
    let len = n + tau as usize;
    let total = (k as u128)
        .checked_pow(len as u32)
        .ok_or_else(|| Error::invalid("enumeration size overflows"))?;
    if total > max_strings {
        return Err(Error::Budget {
            what: "brute-force enumeration".into(),
            needed: total,
            limit: max_strings,
            hint: "shorten tau or use the exact DP".into(),
        });
    }
    let rdim = r_max + 2;
    let mut sums = vec![NeumaierSum::new(); rdim];
    let mut string = vec![0u8; len];
    loop {
        let mut weight = measure.marginal(string[0]);
        if weight > 0.0 {
            for w in string.windows(2) {
                weight *= measure.step(w[0], w[1]);
                if weight == 0.0 {
                    break;
                }
            }
        }
        if weight > 0.0 && !system.admissible(&string) {
            weight = 0.0;
        }
        if weight > 0.0 {
            let mut hits = 0usize;
            for j in 1..=tau as usize {
                if string[j..j + n] == *word {
                    hits += 1;
                }
            }
            sums[hits.min(rdim - 1)].add(weight);
        }
        // odometer increment
        let mut pos = len;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if string[pos] as usize + 1 < k {
                string[pos] += 1;
                break;
            }
            string[pos] = 0;
        }
        if pos == 0 && string[0] == 0 {
            break;
        }
    }
    let probs: Vec<f64> = (0..=r_max).map(|r| sums[r].total()).collect();
    Ok(CountDistribution {
        probs,
        tail_mass: sums[rdim - 1].total(),
        provenance: Provenance::Exact,
        sample_count: 0,
        params: CountParams {
            t: None,
            p: None,
            n,
            tau,
        },
    })
}

/// Rational-arithmetic tier of the brute-force oracle: identical counting,
/// with every weight the exact rational value of its f64 input. Returns the
/// probability vector for counts `0..=r_max` plus the overflow bucket.
pub fn brute_force_distribution_rational(
    system: &ShiftSystem,
    measure: &Measure,
    word: &[Symbol],
    tau: u64,
    r_max: usize,
    max_strings: u128,
) -> Result<Vec<BigRational>> {
    measure.compatible_with(system)?;
    let n = word.len();
    let k = measure.alphabet_size();
    let len = n + tau as usize;
    let total = (k as u128)
        .checked_pow(len as u32)
        .ok_or_else(|| Error::invalid("enumeration size overflows"))?;
    if total > max_strings {
        return Err(Error::Budget {
            what: "rational brute-force enumeration".into(),
            needed: total,
            limit: max_strings,
            hint: "shorten tau".into(),
        });
    }
    let to_rat = |x: f64| BigRational::from_f64(x).expect("finite weight");
    let marginal: Vec<BigRational> = (0..k).map(|a| to_rat(measure.marginal(a as u8))).collect();
    let step: Vec<BigRational> = (0..k * k)
        .map(|i| to_rat(measure.step((i / k) as u8, (i % k) as u8)))
        .collect();
    let rdim = r_max + 2;
    let mut sums = vec![BigRational::zero(); rdim];
    let mut string = vec![0u8; len];
    loop {
        let admissible = system.admissible(&string);
        if admissible {
            let mut weight = marginal[string[0] as usize].clone();
            for w in string.windows(2) {
                if weight.is_zero() {
                    break;
                }
                weight *= &step[w[0] as usize * k + w[1] as usize];
            }
            if !weight.is_zero() {
                let mut hits = 0usize;
                for j in 1..=tau as usize {
                    if string[j..j + n] == *word {
                        hits += 1;
                    }
                }
                sums[hits.min(rdim - 1)] += weight;
            }
        }
        let mut pos = len;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            if string[pos] as usize + 1 < k {
                string[pos] += 1;
                break;
            }
            string[pos] = 0;
        }
        if pos == 0 && string[0] == 0 {
            break;
        }
    }
    Ok(sums)
}

const MC_CHUNK: u64 = 1 << 14;

/// Monte Carlo estimate of the entry-count distribution: stationary-start
/// orbits of length `tau + n`, hits counted through the automaton. The
/// result is deterministic for a fixed seed: samples are partitioned into
/// fixed chunks, chunk `i` drawing from an independently seeded stream, and
/// integer counts merge independently of scheduling.
pub fn monte_carlo_with_tau(
    system: &ShiftSystem,
    measure: &Measure,
    word: &[Symbol],
    tau: u64,
    r_max: usize,
    n_samples: u64,
    seed: u64,
) -> Result<CountDistribution> {
    measure.compatible_with(system)?;
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let aut = PatternAutomaton::new(word, system.alphabet_size())?;
    let n = word.len();
    let k = measure.alphabet_size();
    let rdim = r_max + 2;
    let marginal: Vec<f64> = (0..k).map(|a| measure.marginal(a as u8)).collect();
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| measure.step(a as u8, b as u8)).collect())
        .collect();
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let counts: Vec<u64> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let quota = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk + 1);
            let mut local = vec![0u64; rdim];
            let draw = |probs: &[f64], rng: &mut ChaCha8Rng| -> u8 {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (i, &w) in probs.iter().enumerate() {
                    cum += w;
                    if u < cum {
                        return i as u8;
                    }
                }
                (probs.len() - 1) as u8
            };
            for _ in 0..quota {
                let mut sym = draw(&marginal, &mut rng);
                let mut state = aut.step(0, sym);
                let mut hits = 0usize;
                for i in 1..(tau + n as u64) {
                    sym = draw(&rows[sym as usize], &mut rng);
                    state = aut.step(state, sym);
                    if state == aut.accept_state() && i >= n as u64 {
                        hits += 1;
                    }
                }
                local[hits.min(rdim - 1)] += 1;
            }
            local
        })
        .reduce(
            || vec![0u64; rdim],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    let probs: Vec<f64> = counts[..=r_max]
        .iter()
        .map(|&c| c as f64 / n_samples as f64)
        .collect();
    Ok(CountDistribution {
        probs,
        tail_mass: counts[rdim - 1] as f64 / n_samples as f64,
        provenance: Provenance::MonteCarlo,
        sample_count: n_samples,
        params: CountParams {
            t: None,
            p: None,
            n,
            tau,
        },
    })
}

/// Monte Carlo entry distribution with `tau` derived from the target.
pub fn monte_carlo_distribution(
    system: &ShiftSystem,
    measure: &Measure,
    target: &CylinderTarget,
    t: f64,
    r_max: usize,
    n_samples: u64,
    seed: u64,
) -> Result<CountDistribution> {
    let tau = target.tau(t);
    let d = monte_carlo_with_tau(system, measure, target.word(), tau, r_max, n_samples, seed)?;
    Ok(with_target_params(d, target, t))
}

fn merge_positions(
    pattern: &[Symbol],
    positions: &[u64],
) -> Result<Option<Vec<(u64, Symbol)>>> {
    if positions.is_empty() {
        return Err(Error::invalid("need at least one position"));
    }
    if positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("positions must be strictly increasing"));
    }
    let n = pattern.len() as u64;
    let mut fixed: Vec<(u64, Symbol)> = Vec::new();
    for &v in positions {
        for (off, &s) in pattern.iter().enumerate() {
            fixed.push((v + off as u64, s));
        }
    }
    fixed.sort_unstable();
    let mut merged: Vec<(u64, Symbol)> = Vec::with_capacity(fixed.len());
    for (pos, s) in fixed {
        match merged.last() {
            Some(&(last_pos, last_s)) if last_pos == pos => {
                if last_s != s {
                    return Ok(None); // conflicting overlap
                }
            }
            _ => merged.push((pos, s)),
        }
    }
    let _ = n;
    Ok(Some(merged))
}

/// Exact measure of the intersection `cap_i T^{-v_i} [pattern]`: fixes the
/// pattern letters at every listed offset, returns 0 on conflicting
/// overlaps, and sums transition weights over free gaps via matrix powers.
pub fn joint_pattern_measure(
    system: &ShiftSystem,
    measure: &Measure,
    pattern: &[Symbol],
    positions: &[u64],
) -> Result<f64> {
    measure.compatible_with(system)?;
    if pattern.is_empty() {
        return Err(Error::invalid("pattern must be nonempty"));
    }
    let merged = match merge_positions(pattern, positions)? {
        Some(m) => m,
        None => return Ok(0.0),
    };
    if !system.admissible(pattern) {
        return Ok(0.0);
    }
    match measure {
        Measure::Bernoulli { weights } => {
            Ok(merged.iter().map(|&(_, s)| weights[s as usize]).product())
        }
        Measure::Markov { matrix, stationary } => {
            let k = stationary.len();
            let mut acc = stationary[merged[0].1 as usize];
            for w in merged.windows(2) {
                let (pos_a, a) = w[0];
                let (pos_b, b) = w[1];
                let gap = pos_b - pos_a;
                if gap == 1 {
                    acc *= matrix[a as usize * k + b as usize];
                } else {
                    let power = mat_pow(k, matrix, gap);
                    acc *= power[a as usize * k + b as usize];
                }
                if acc == 0.0 {
                    return Ok(0.0);
                }
            }
            Ok(acc)
        }
    }
}

/// Exact-rational tier of [`joint_pattern_measure`] for Bernoulli measures;
/// weights are the exact rational values of the f64 inputs, so results are
/// exact and order-independent.
pub fn joint_pattern_measure_rational(
    system: &ShiftSystem,
    measure: &Measure,
    pattern: &[Symbol],
    positions: &[u64],
) -> Result<BigRational> {
    measure.compatible_with(system)?;
    let weights = match measure {
        Measure::Bernoulli { weights } => weights,
        Measure::Markov { .. } => {
            return Err(Error::invalid(
                "the exact rational tier supports Bernoulli measures only",
            ))
        }
    };
    let merged = match merge_positions(pattern, positions)? {
        Some(m) => m,
        None => return Ok(BigRational::zero()),
    };
    let rat: Vec<BigRational> = weights
        .iter()
        .map(|&w| BigRational::from_f64(w).expect("finite weight"))
        .collect();
    let mut acc = BigRational::from(BigInt::one());
    for &(_, s) in &merged {
        acc *= &rat[s as usize];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{pmf, DistParams, Kind};
    use crate::stats::chi_square_gof;
    use num_traits::ToPrimitive;

    fn fair() -> (ShiftSystem, Measure) {
        (
            ShiftSystem::full(2).unwrap(),
            Measure::bernoulli(vec![0.5, 0.5]).unwrap(),
        )
    }

    fn bern37() -> (ShiftSystem, Measure) {
        (
            ShiftSystem::full(2).unwrap(),
            Measure::bernoulli(vec![0.3, 0.7]).unwrap(),
        )
    }

    fn markov_example() -> (ShiftSystem, Measure) {
        (
            ShiftSystem::full(2).unwrap(),
            Measure::markov(vec![0.9, 0.1, 0.2, 0.8], 2).unwrap(),
        )
    }

    #[test]
    fn automaton_counts_match_naive_scan() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let k = rng.gen_range(2..4usize);
            let n = rng.gen_range(1..6usize);
            let pattern: Vec<Symbol> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
            let len = rng.gen_range(n..80usize);
            let stream: Vec<Symbol> = (0..len).map(|_| rng.gen_range(0..k as u8)).collect();
            let aut = PatternAutomaton::new(&pattern, k).unwrap();
            let naive = (n..len)
                .filter(|&i| stream[i + 1 - n..=i] == pattern[..])
                .count() as u64;
            assert_eq!(aut.count_hits(&stream), naive, "pattern {pattern:?}");
        }
    }

    #[test]
    fn fair_coin_single_symbol_tau_two() {
        let (sys, m) = fair();
        let d = exact_entry_with_tau(&sys, &m, &[0], 2, 4, &DpBudget::default()).unwrap();
        assert!((d.probs[0] - 0.25).abs() < 1e-15);
        assert!((d.probs[1] - 0.5).abs() < 1e-15);
        assert!((d.probs[2] - 0.25).abs() < 1e-15);
        assert_eq!(d.tail_mass, 0.0);
        d.validate().unwrap();
    }

    #[test]
    fn single_trial_is_stationary_marginal() {
        let (sys, m) = bern37();
        for word in [vec![0u8], vec![0, 0], vec![0, 1, 0]] {
            let mu = cylinder_measure(&sys, &m, &word);
            let d = exact_entry_with_tau(&sys, &m, &word, 1, 3, &DpBudget::default()).unwrap();
            assert!((d.probs[0] - (1.0 - mu)).abs() < 1e-14);
            assert!((d.probs[1] - mu).abs() < 1e-14);
        }
    }

    #[test]
    fn return_single_step_examples() {
        let (sys, m) = fair();
        let d = exact_return_with_tau(&sys, &m, &[0], 1, 3, &DpBudget::default()).unwrap();
        assert!((d.probs[0] - 0.5).abs() < 1e-15);
        assert!((d.probs[1] - 0.5).abs() < 1e-15);

        // P(no return within one step | A_n) = 1 - p for a periodic target
        let (sys, m) = bern37();
        let target = CylinderTarget::periodic(&sys, &m, &[0], 6).unwrap();
        let d =
            exact_return_with_tau(&sys, &m, target.word(), 1, 3, &DpBudget::default()).unwrap();
        assert!((d.probs[0] - (1.0 - target.p())).abs() < 1e-14);
    }

    #[test]
    fn accept_mass_after_window_equals_cylinder_measure() {
        // running the entry DP through the first window leaves mass
        // mu(A_n) in the accept state
        let (sys, m) = markov_example();
        let word = vec![0u8, 0, 1];
        let aut = PatternAutomaton::new(&word, 2).unwrap();
        let mut dp = CountDp::new(&aut, &m, 3);
        for a in 0..2u8 {
            let q = aut.step(0, a);
            let i = dp.idx(q, a, 0);
            dp.cur[i] = m.marginal(a);
        }
        for _ in 1..word.len() {
            dp.step(false);
        }
        let mut accept_mass = 0.0;
        for c in 0..2u8 {
            for r in 0..dp.rdim {
                accept_mass += dp.cur[dp.idx(aut.accept_state(), c, r)];
            }
        }
        let mu = cylinder_measure(&sys, &m, &word);
        assert!((accept_mass - mu).abs() < 1e-14);
    }

    #[test]
    fn dp_matches_brute_force_spot() {
        let (sys, m) = bern37();
        for (word, tau) in [(vec![0u8, 0], 12u64), (vec![0u8, 1], 6)] {
            let dp =
                exact_entry_with_tau(&sys, &m, &word, tau, 5, &DpBudget::default()).unwrap();
            let bf = brute_force_distribution(&sys, &m, &word, tau, 5, 1 << 24).unwrap();
            for r in 0..=5 {
                assert!(
                    (dp.probs[r] - bf.probs[r]).abs() < 1e-12,
                    "word {word:?} r {r}: {} vs {}",
                    dp.probs[r],
                    bf.probs[r]
                );
            }
            assert!((dp.tail_mass - bf.tail_mass).abs() < 1e-12);
        }
    }

    #[test]
    fn rational_tier_certifies_brute_force() {
        let (sys, m) = bern37();
        let word = vec![0u8, 1];
        let bf = brute_force_distribution(&sys, &m, &word, 6, 4, 1 << 24).unwrap();
        let exact = brute_force_distribution_rational(&sys, &m, &word, 6, 4, 1 << 24).unwrap();
        for r in 0..=4 {
            let e = exact[r].to_f64().unwrap();
            assert!((bf.probs[r] - e).abs() < 1e-15);
        }
        // the f64 weights 0.3 and 0.7 are not exactly complementary as
        // rationals, so total mass is 1 only up to their representation gap
        let mass: BigRational = exact.iter().cloned().sum();
        assert!((mass.to_f64().unwrap() - 1.0).abs() < 1e-12);

        // dyadic weights are exact, so there mass is exactly 1
        let (sys, half) = fair();
        let exact = brute_force_distribution_rational(&sys, &half, &word, 6, 4, 1 << 24).unwrap();
        let mass: BigRational = exact.iter().cloned().sum();
        assert!(mass.is_one());
    }

    #[test]
    fn zero_measure_target_gives_point_mass_at_zero() {
        let gm = ShiftSystem::with_transitions(2, vec![0, 1, 1, 1]).unwrap();
        let mk = Measure::markov(vec![0.0, 1.0, 0.5, 0.5], 2).unwrap();
        let bf = brute_force_distribution(&gm, &mk, &[0, 0], 5, 3, 1 << 24).unwrap();
        assert!((bf.probs[0] - 1.0).abs() < 1e-12);
        let dp = exact_entry_with_tau(&gm, &mk, &[0, 0], 5, 3, &DpBudget::default()).unwrap();
        assert!((dp.probs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_errors_are_explicit() {
        let (sys, m) = bern37();
        let tiny = DpBudget { max_cells: 10 };
        let err = exact_entry_with_tau(&sys, &m, &[0, 0], 100, 5, &tiny).unwrap_err();
        assert!(err.is_budget());
        let err = brute_force_distribution(&sys, &m, &[0, 0], 30, 5, 1 << 10).unwrap_err();
        assert!(err.is_budget());
    }

    #[test]
    fn mass_and_expectation_identities() {
        let (sys, m) = bern37();
        let word = vec![0u8, 0];
        let tau = 100u64;
        let d = exact_entry_with_tau(&sys, &m, &word, tau, 60, &DpBudget::default()).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-10);
        assert!(d.tail_mass < 1e-8);
        let mu = cylinder_measure(&sys, &m, &word);
        assert!(
            (d.mean() - tau as f64 * mu).abs() < 1e-8,
            "mean {} vs {}",
            d.mean(),
            tau as f64 * mu
        );
    }

    #[test]
    fn monte_carlo_is_deterministic_and_consistent() {
        let (sys, m) = bern37();
        let target = CylinderTarget::periodic(&sys, &m, &[0], 2).unwrap();
        let a = monte_carlo_distribution(&sys, &m, &target, 1.0, 8, 40_000, 12345).unwrap();
        let b = monte_carlo_distribution(&sys, &m, &target, 1.0, 8, 40_000, 12345).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_count, 40_000);
        let one = monte_carlo_with_tau(&sys, &m, &[0, 1], 4, 3, 1, 7).unwrap();
        let nonzero: Vec<f64> = one.probs.iter().chain([&one.tail_mass]).cloned().collect();
        assert_eq!(nonzero.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn monte_carlo_matches_exact_chi_square() {
        let (sys, m) = bern37();
        let target = CylinderTarget::periodic(&sys, &m, &[0], 2).unwrap();
        let t = 1.0;
        let r_max = 10;
        let exact = exact_entry_distribution(&sys, &m, &target, t, r_max, &DpBudget::default())
            .unwrap();
        let n_samples = 1_000_000u64;
        let mc =
            monte_carlo_distribution(&sys, &m, &target, t, r_max, n_samples, 20_240_601).unwrap();
        let observed: Vec<u64> = mc
            .probs
            .iter()
            .chain([&mc.tail_mass])
            .map(|&x| (x * n_samples as f64).round() as u64)
            .collect();
        let mut expected: Vec<f64> = exact.probs.clone();
        expected.push(exact.tail_mass);
        let res = chi_square_gof(&observed, &expected, n_samples, 5.0).unwrap();
        assert!(
            res.p_value > 1e-3,
            "chi2 {} dof {} p {}",
            res.statistic,
            res.dof,
            res.p_value
        );
    }

    #[test]
    fn mixed_prefix_word_converges_to_poisson_not_compound() {
        // a word 0^a 1^c has no self-overlap, so its visit counts approach
        // Poisson(t/(1-p)) rather than the compound law with the 1-run's p
        let (sys, m) = bern37();
        let p2 = 0.7;
        let t = 1.0;
        let word: Vec<Symbol> = [vec![0u8; 2], vec![1u8; 16]].concat();
        let mu = cylinder_measure(&sys, &m, &word);
        let tau = (t / ((1.0 - p2) * mu)).floor() as u64;
        let d = exact_entry_with_tau(&sys, &m, &word, tau, 12, &DpBudget::default()).unwrap();
        let lam = DistParams::new(t / (1.0 - p2), 0.0).unwrap();
        let poisson = CountDistribution::limit_law(lam, Kind::Entry, 12);
        let compound = CountDistribution::limit_law(
            DistParams::new(t, p2).unwrap(),
            Kind::Entry,
            12,
        );
        assert!(d.tv_distance(&poisson) < 0.01);
        assert!(d.tv_distance(&compound) > 0.3);
        // and the gap at r = 2 stays near its limit value
        assert!((d.probs[2] - pmf(2, DistParams::new(t, p2).unwrap(), Kind::Entry)).abs() > 0.09);
    }

    #[test]
    fn joint_measure_examples() {
        let (sys, m) = bern37();
        // non-overlapping placements of "00" are independent under a product measure
        let v = joint_pattern_measure(&sys, &m, &[0, 0], &[1, 10]).unwrap();
        assert!((v - 0.0081).abs() < 1e-15);
        // conflicting overlap
        assert_eq!(joint_pattern_measure(&sys, &m, &[0, 1], &[1, 2]).unwrap(), 0.0);
        // merged cylinder "000"
        let v = joint_pattern_measure(&sys, &m, &[0, 0], &[1, 2]).unwrap();
        assert!((v - 0.027).abs() < 1e-15);
        // r = 1 reduces to the cylinder measure
        let v = joint_pattern_measure(&sys, &m, &[0, 1, 0], &[5]).unwrap();
        assert!((v - cylinder_measure(&sys, &m, &[0, 1, 0])).abs() < 1e-15);
        // positions must increase
        assert!(joint_pattern_measure(&sys, &m, &[0], &[3, 3]).is_err());
    }

    #[test]
    fn joint_measure_markov_gap_uses_matrix_power() {
        let (sys, m) = markov_example();
        // fix "0" at 1 and at 4: pi_0 * (P^3)_{00}
        let v = joint_pattern_measure(&sys, &m, &[0], &[1, 4]).unwrap();
        let p3 = mat_pow(2, &[0.9, 0.1, 0.2, 0.8], 3);
        assert!((v - (2.0 / 3.0) * p3[0]).abs() < 1e-12);
        // brute-force cross-check over strings of length 5
        let mut total = 0.0;
        for bits in 0..32u32 {
            let s: Vec<Symbol> = (0..5).map(|i| ((bits >> i) & 1) as u8).collect();
            if s[0] == 0 && s[3] == 0 {
                total += cylinder_measure(&sys, &m, &s);
            }
        }
        // positions 1 and 4 in hit-offset coordinates are string indices 0 and 3
        assert!((v - total).abs() < 1e-12);
    }

    #[test]
    fn rational_joint_measure_is_exact() {
        let (sys, m) = bern37();
        let a = joint_pattern_measure_rational(&sys, &m, &[0, 0], &[1, 3]).unwrap();
        let b = joint_pattern_measure_rational(&sys, &m, &[0, 0], &[1, 3]).unwrap();
        assert_eq!(a, b);
        let (msys, mm) = markov_example();
        assert!(joint_pattern_measure_rational(&msys, &mm, &[0], &[1]).is_err());
    }
}
