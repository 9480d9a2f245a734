//! Shift spaces over a finite alphabet, Bernoulli and Markov invariant
//! measures, cylinder sets around periodic points, and the exact cluster
//! parameter `p` with its ratio deviation `q_n`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{mat_pow, NeumaierSum};

/// Alphabet symbols are small integers.
pub type Symbol = u8;

/// A subshift of finite type: alphabet plus 0/1 transition matrix.
/// The full shift has an all-ones matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftSystem {
    alphabet: usize,
    transitions: Vec<u8>,
}

impl ShiftSystem {
    /// The full shift on `alphabet` symbols.
    pub fn full(alphabet: usize) -> Result<Self> {
        Self::with_transitions(alphabet, vec![1; alphabet * alphabet])
    }

    /// A subshift from a row-major 0/1 transition matrix. Every row and
    /// every column must contain at least one 1.
    pub fn with_transitions(alphabet: usize, transitions: Vec<u8>) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::invalid("alphabet size must be at least 2"));
        }
        if transitions.len() != alphabet * alphabet {
            return Err(Error::invalid(format!(
                "transition matrix needs {} entries, got {}",
                alphabet * alphabet,
                transitions.len()
            )));
        }
        if transitions.iter().any(|&x| x > 1) {
            return Err(Error::invalid("transition entries must be 0 or 1"));
        }
        for i in 0..alphabet {
            if (0..alphabet).all(|j| transitions[i * alphabet + j] == 0) {
                return Err(Error::invalid(format!("symbol {i} has no outgoing transition")));
            }
            if (0..alphabet).all(|j| transitions[j * alphabet + i] == 0) {
                return Err(Error::invalid(format!("symbol {i} has no incoming transition")));
            }
        }
        Ok(ShiftSystem {
            alphabet,
            transitions,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    #[inline]
    pub fn allows(&self, a: Symbol, b: Symbol) -> bool {
        self.transitions[a as usize * self.alphabet + b as usize] == 1
    }

    pub fn is_full(&self) -> bool {
        self.transitions.iter().all(|&x| x == 1)
    }

    /// Primitivity check (some power of the transition matrix is strictly
    /// positive), via boolean powers up to the Wielandt exponent.
    pub fn is_primitive(&self) -> bool {
        let k = self.alphabet;
        let limit = (k - 1) * (k - 1) + 1;
        let mut power: Vec<u8> = self.transitions.clone();
        for _ in 0..limit {
            if power.iter().all(|&x| x == 1) {
                return true;
            }
            let mut next = vec![0u8; k * k];
            for i in 0..k {
                for l in 0..k {
                    if power[i * k + l] == 1 {
                        for j in 0..k {
                            next[i * k + j] |= self.transitions[l * k + j];
                        }
                    }
                }
            }
            next = next.iter().map(|&x| x.min(1)).collect();
            power = next;
        }
        power.iter().all(|&x| x == 1)
    }

    /// True when every symbol is valid and every adjacent pair is allowed.
    pub fn admissible(&self, word: &[Symbol]) -> bool {
        if word.iter().any(|&s| s as usize >= self.alphabet) {
            return false;
        }
        word.windows(2).all(|w| self.allows(w[0], w[1]))
    }

    /// All admissible words of length `n`, in lexicographic order.
    pub fn admissible_words(&self, n: usize) -> Vec<Vec<Symbol>> {
        let mut out = Vec::new();
        let mut word = Vec::with_capacity(n);
        self.extend_words(n, &mut word, &mut out);
        out
    }

    fn extend_words(&self, n: usize, word: &mut Vec<Symbol>, out: &mut Vec<Vec<Symbol>>) {
        if word.len() == n {
            out.push(word.clone());
            return;
        }
        for s in 0..self.alphabet as Symbol {
            if let Some(&last) = word.last() {
                if !self.allows(last, s) {
                    continue;
                }
            }
            word.push(s);
            self.extend_words(n, word, out);
            word.pop();
        }
    }
}

/// A shift-invariant measure: Bernoulli product weights or a stationary
/// Markov chain (stochastic matrix plus its stationary vector).
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Bernoulli { weights: Vec<f64> },
    Markov { matrix: Vec<f64>, stationary: Vec<f64> },
}

impl Measure {
    pub fn bernoulli(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("need at least two weights"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || w >= 1.0) {
            return Err(Error::invalid("Bernoulli weights must lie in (0, 1)"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Measure::Bernoulli { weights })
    }

    /// Builds a stationary Markov measure from a row-stochastic matrix,
    /// computing the stationary vector by power iteration.
    pub fn markov(matrix: Vec<f64>, alphabet: usize) -> Result<Self> {
        validate_stochastic(&matrix, alphabet)?;
        let mut pi = vec![1.0 / alphabet as f64; alphabet];
        for _ in 0..200_000 {
            let mut next = vec![0.0; alphabet];
            for i in 0..alphabet {
                let pii = pi[i];
                for j in 0..alphabet {
                    next[j] += pii * matrix[i * alphabet + j];
                }
            }
            let norm: f64 = next.iter().sum();
            for x in &mut next {
                *x /= norm;
            }
            let delta: f64 = pi
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            pi = next;
            if delta < 1e-16 {
                break;
            }
        }
        Self::markov_with_stationary(matrix, pi)
    }

    /// Builds a stationary Markov measure from a matrix and a caller-supplied
    /// stationary vector; validates `pi P = pi` to 1e-12 and positivity.
    pub fn markov_with_stationary(matrix: Vec<f64>, stationary: Vec<f64>) -> Result<Self> {
        let k = stationary.len();
        validate_stochastic(&matrix, k)?;
        if stationary.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::invalid("stationary vector must be entrywise positive"));
        }
        let sum: f64 = stationary.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("stationary vector sums to {sum}, not 1")));
        }
        for j in 0..k {
            let mut s = NeumaierSum::new();
            for i in 0..k {
                s.add(stationary[i] * matrix[i * k + j]);
            }
            if (s.total() - stationary[j]).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "stationary vector fails pi P = pi at column {j} by {}",
                    (s.total() - stationary[j]).abs()
                )));
            }
        }
        Ok(Measure::Markov { matrix, stationary })
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            Measure::Bernoulli { weights } => weights.len(),
            Measure::Markov { stationary, .. } => stationary.len(),
        }
    }

    /// One-symbol stationary marginal.
    #[inline]
    pub fn marginal(&self, a: Symbol) -> f64 {
        match self {
            Measure::Bernoulli { weights } => weights[a as usize],
            Measure::Markov { stationary, .. } => stationary[a as usize],
        }
    }

    /// One-step conditional probability of `b` after `a`.
    #[inline]
    pub fn step(&self, a: Symbol, b: Symbol) -> f64 {
        match self {
            Measure::Bernoulli { weights } => weights[b as usize],
            Measure::Markov { matrix, stationary } => {
                matrix[a as usize * stationary.len() + b as usize]
            }
        }
    }

    /// Checks measure/system compatibility: alphabet sizes agree, a Markov
    /// measure is supported only on allowed transitions, and a Bernoulli
    /// measure (a product measure) is paired with the full shift, where it
    /// is stationary.
    pub fn compatible_with(&self, system: &ShiftSystem) -> Result<()> {
        if self.alphabet_size() != system.alphabet_size() {
            return Err(Error::invalid(format!(
                "measure alphabet {} does not match system alphabet {}",
                self.alphabet_size(),
                system.alphabet_size()
            )));
        }
        match self {
            Measure::Bernoulli { .. } => {
                if !system.is_full() {
                    return Err(Error::invalid(
                        "a Bernoulli measure is only stationary on the full shift",
                    ));
                }
            }
            Measure::Markov { matrix, stationary } => {
                let k = stationary.len();
                for i in 0..k {
                    for j in 0..k {
                        if matrix[i * k + j] > 0.0 && !system.allows(i as Symbol, j as Symbol) {
                            return Err(Error::invalid(format!(
                                "Markov support uses forbidden transition {i} -> {j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_stochastic(matrix: &[f64], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid("need at least two states"));
    }
    if matrix.len() != k * k {
        return Err(Error::invalid(format!(
            "transition matrix needs {} entries, got {}",
            k * k,
            matrix.len()
        )));
    }
    for i in 0..k {
        if matrix[i * k..(i + 1) * k].iter().any(|&x| x < 0.0 || x > 1.0) {
            return Err(Error::invalid(format!("row {i} has entries outside [0, 1]")));
        }
        let sum: f64 = matrix[i * k..(i + 1) * k].iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// Exact measure of the cylinder `[word]`. Inadmissible words get measure 0
/// rather than an error; the empty word denotes the whole space.
pub fn cylinder_measure(system: &ShiftSystem, measure: &Measure, word: &[Symbol]) -> f64 {
    if word.is_empty() {
        return 1.0;
    }
    if !system.admissible(word) {
        return 0.0;
    }
    let mut acc = measure.marginal(word[0]);
    for w in word.windows(2) {
        acc *= measure.step(w[0], w[1]);
    }
    acc
}

/// Minimal period of the periodic extension `word^infinity`: the smallest
/// divisor `m` of `len(word)` with `word[i] == word[i mod m]` for all `i`.
///
/// # Panics
/// Panics on an empty word.
pub fn minimal_period(word: &[Symbol]) -> usize {
    let n = word.len();
    assert!(n > 0, "minimal_period of an empty word");
    for m in 1..n {
        if n % m == 0 && (m..n).all(|i| word[i] == word[i - m]) {
            return m;
        }
    }
    n
}

/// All shifts `l` in `[1, n-1]` under which the word overlaps itself:
/// `word[i + l] == word[i]` for every `i` in `[0, n-1-l]`.
pub fn self_overlaps(word: &[Symbol]) -> Vec<usize> {
    let n = word.len();
    assert!(n > 0, "self_overlaps of an empty word");
    (1..n)
        .filter(|&l| (0..n - l).all(|i| word[i + l] == word[i]))
        .collect()
}

/// Cluster parameter of the periodic point `block^infinity` and the ratio
/// deviation `q_n`. For Bernoulli measures `p` is the product of the letter
/// weights over one minimal period; for Markov measures it is the product
/// of the transition weights around the cycle. In both cases the ratio
/// `mu(A_{l+m})/mu(A_l)` is constant in `l`, so `q_n = 0` exactly.
pub fn cluster_parameter(
    system: &ShiftSystem,
    measure: &Measure,
    block: &[Symbol],
    n: usize,
) -> Result<(f64, f64)> {
    if block.is_empty() {
        return Err(Error::invalid("periodic block must be nonempty"));
    }
    if block.iter().any(|&s| (s as usize) >= system.alphabet_size()) {
        return Err(Error::invalid("block uses symbols outside the alphabet"));
    }
    let m = minimal_period(block);
    if m > n {
        return Err(Error::invalid(format!(
            "minimal period {m} exceeds the cylinder length {n}"
        )));
    }
    // the periodic orbit must be admissible, including the wrap-around edge
    for i in 0..m {
        let a = block[i];
        let b = block[(i + 1) % m];
        if !system.allows(a, b) {
            return Err(Error::invalid(format!(
                "periodic orbit uses forbidden transition {a} -> {b}"
            )));
        }
    }
    let p = match measure {
        Measure::Bernoulli { weights } => (0..m).map(|i| weights[block[i] as usize]).product(),
        Measure::Markov { .. } => (0..m)
            .map(|i| measure.step(block[i], block[(i + 1) % m]))
            .product(),
    };
    if !(p > 0.0) || p >= 1.0 {
        return Err(Error::invalid(format!(
            "cluster parameter {p} outside (0, 1); the orbit has degenerate weight"
        )));
    }
    Ok((p, 0.0))
}

/// A cylinder around a periodic point: the length-`n` prefix of
/// `block^infinity` together with its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderTarget {
    word: Vec<Symbol>,
    period: usize,
    p: f64,
    q_n: f64,
    mu: f64,
}

impl CylinderTarget {
    /// Builds the target for the length-`n` cylinder around the periodic
    /// point `block^infinity`.
    pub fn periodic(
        system: &ShiftSystem,
        measure: &Measure,
        block: &[Symbol],
        n: usize,
    ) -> Result<Self> {
        measure.compatible_with(system)?;
        if n == 0 {
            return Err(Error::invalid("cylinder length must be positive"));
        }
        let (p, q_n) = cluster_parameter(system, measure, block, n)?;
        let m = minimal_period(block);
        let word: Vec<Symbol> = (0..n).map(|i| block[i % m]).collect();
        let mu = cylinder_measure(system, measure, &word);
        if !(mu > 0.0) {
            return Err(Error::invalid("cylinder has measure zero"));
        }
        Ok(CylinderTarget {
            word,
            period: m,
            p,
            q_n,
            mu,
        })
    }

    pub fn word(&self) -> &[Symbol] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// Minimal period `m` of the underlying periodic point.
    pub fn period(&self) -> usize {
        self.period
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q_n(&self) -> f64 {
        self.q_n
    }

    /// `mu(A_n)`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Immediate-return horizon `M = n - m`.
    pub fn immediate_horizon(&self) -> usize {
        self.len() - self.period
    }

    /// Observation time `tau = floor(t / ((1-p) mu(A_n)))`.
    pub fn tau(&self, t: f64) -> u64 {
        observation_time(self, t)
    }
}

/// `floor(t / ((1-p) mu(A_n)))` for `t >= 0`.
pub fn observation_time(target: &CylinderTarget, t: f64) -> u64 {
    assert!(t >= 0.0 && t.is_finite(), "time parameter must be finite and >= 0");
    (t / ((1.0 - target.p) * target.mu)).floor() as u64
}

/// Mixing-rate model `phi(gap)`, non-increasing in the gap by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingRate {
    /// Exact independence at any separation (product measures).
    Zero,
    /// `coeff * rho^gap` with `rho` in (0, 1).
    Geometric { coeff: f64, rho: f64 },
    /// `coeff * gap^-kappa` with `kappa > 0` (and `coeff` at gap 0).
    Algebraic { coeff: f64, kappa: f64 },
}

impl MixingRate {
    pub fn geometric(coeff: f64, rho: f64) -> Result<Self> {
        if !(coeff >= 0.0) || !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid("need coeff >= 0 and rho in (0, 1)"));
        }
        Ok(MixingRate::Geometric { coeff, rho })
    }

    pub fn algebraic(coeff: f64, kappa: f64) -> Result<Self> {
        if !(coeff >= 0.0) || !(kappa > 0.0) {
            return Err(Error::invalid("need coeff >= 0 and kappa > 0"));
        }
        Ok(MixingRate::Algebraic { coeff, kappa })
    }

    pub fn phi(&self, gap: u64) -> f64 {
        match *self {
            MixingRate::Zero => 0.0,
            MixingRate::Geometric { coeff, rho } => coeff * rho.powi(gap as i32),
            MixingRate::Algebraic { coeff, kappa } => {
                if gap == 0 {
                    coeff
                } else {
                    coeff * (gap as f64).powf(-kappa)
                }
            }
        }
    }
}

/// Separation function: the minimal extra gap after which the mixing
/// inequality applies to cylinders of a given length. Identically zero for
/// plain phi-mixing; non-decreasing by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum SeparationFn {
    Zero,
    Linear { factor: f64 },
}

impl SeparationFn {
    pub fn eval(&self, n: usize) -> u64 {
        match *self {
            SeparationFn::Zero => 0,
            SeparationFn::Linear { factor } => (factor * n as f64).ceil().max(0.0) as u64,
        }
    }
}

/// A mixing profile: decay rate plus separation requirement.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSpec {
    pub rate: MixingRate,
    pub separation: SeparationFn,
}

impl MixingSpec {
    /// Plain phi-mixing with the given rate (separation identically zero).
    pub fn phi_mixing(rate: MixingRate) -> Self {
        MixingSpec {
            rate,
            separation: SeparationFn::Zero,
        }
    }
}

/// Which cylinder pairs a mixing measurement ranges over.
#[derive(Debug, Clone)]
pub enum PairFamily {
    /// Every ordered pair of positive-measure admissible words.
    All,
    /// A deterministic seeded sample of ordered pairs.
    Sample { count: usize, seed: u64 },
    /// Explicitly listed ordered pairs `(U, V)` of length-n words.
    Pairs(Vec<(Vec<Symbol>, Vec<Symbol>)>),
}

/// Exact mixing coefficient of the measure at the given gap, maximized over
/// a family of ordered pairs `(U, V)` of `n`-cylinders:
/// `max |mu(U cap T^{-gap-n} V) / (mu(U) mu(V)) - 1|`.
///
/// A Bernoulli measure factorizes over the disjoint windows, so the result
/// is exactly 0. For a Markov measure the ratio depends only on the last
/// symbol of `U` and the first symbol of `V`, and equals
/// `(P^{gap+1})[a, b] / pi[b]`; the maximum over `All` pairs is taken over
/// the symbol pairs realized by positive-measure words.
pub fn measured_phi(
    system: &ShiftSystem,
    measure: &Measure,
    n: usize,
    gap: u64,
    family: &PairFamily,
) -> Result<f64> {
    measure.compatible_with(system)?;
    if n == 0 {
        return Err(Error::invalid("cylinder length must be positive"));
    }
    let (matrix, pi) = match measure {
        Measure::Bernoulli { .. } => return Ok(0.0),
        Measure::Markov { matrix, stationary } => (matrix, stationary),
    };
    let k = pi.len();
    let power = mat_pow(k, matrix, gap + 1);
    let deviation = |a: usize, b: usize| (power[a * k + b] / pi[b] - 1.0).abs();
    match family {
        PairFamily::All => {
            let words = system.admissible_words(n);
            let mut last_syms = vec![false; k];
            let mut first_syms = vec![false; k];
            for w in &words {
                if cylinder_measure(system, measure, w) > 0.0 {
                    first_syms[w[0] as usize] = true;
                    last_syms[w[n - 1] as usize] = true;
                }
            }
            let mut worst: f64 = 0.0;
            for a in 0..k {
                for b in 0..k {
                    if last_syms[a] && first_syms[b] {
                        worst = worst.max(deviation(a, b));
                    }
                }
            }
            Ok(worst)
        }
        PairFamily::Sample { count, seed } => {
            let words = system.admissible_words(n);
            let positive: Vec<&Vec<Symbol>> = words
                .iter()
                .filter(|w| cylinder_measure(system, measure, w) > 0.0)
                .collect();
            if positive.is_empty() {
                return Err(Error::invalid("no positive-measure words at this length"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut worst: f64 = 0.0;
            for _ in 0..*count {
                let u = positive[rng.gen_range(0..positive.len())];
                let v = positive[rng.gen_range(0..positive.len())];
                worst = worst.max(deviation(u[n - 1] as usize, v[0] as usize));
            }
            Ok(worst)
        }
        PairFamily::Pairs(pairs) => {
            let mut worst: f64 = 0.0;
            for (u, v) in pairs {
                if u.len() != n || v.len() != n {
                    return Err(Error::invalid("listed pairs must have length n"));
                }
                if cylinder_measure(system, measure, u) == 0.0
                    || cylinder_measure(system, measure, v) == 0.0
                {
                    return Err(Error::invalid("listed pairs must have positive measure"));
                }
                worst = worst.max(deviation(u[n - 1] as usize, v[0] as usize));
            }
            Ok(worst)
        }
    }
}
