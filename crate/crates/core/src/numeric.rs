//! Small numeric helpers shared across the crate: compensated summation,
//! log-factorials, exact binomials, and dense matrix powers.

use std::sync::OnceLock;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

const LN_FACT_TABLE_LEN: usize = 8192;

fn ln_fact_table() -> &'static [f64; LN_FACT_TABLE_LEN] {
    static TABLE: OnceLock<Box<[f64; LN_FACT_TABLE_LEN]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([0.0; LN_FACT_TABLE_LEN]);
        let mut acc = 0.0f64;
        for k in 1..LN_FACT_TABLE_LEN {
            acc += (k as f64).ln();
            t[k] = acc;
        }
        t
    })
}

/// ln(k!) with a precomputed table for small k.
pub fn ln_factorial(k: u64) -> f64 {
    if (k as usize) < LN_FACT_TABLE_LEN {
        ln_fact_table()[k as usize]
    } else {
        statrs::function::gamma::ln_gamma(k as f64 + 1.0)
    }
}

/// k! as f64 by direct product while it stays finite (k <= 170), otherwise
/// via exp(ln k!).
pub fn factorial_f64(k: u64) -> f64 {
    if k <= 170 {
        (1..=k).map(|i| i as f64).product()
    } else {
        ln_factorial(k).exp()
    }
}

/// Exact binomial coefficient, None on u128 overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul((n - k + i) as u128)?;
        acc /= i as u128; // exact: C(n-k+i, i) is an integer
    }
    Some(acc)
}

/// Binomial coefficient as f64; exact-integer route when small enough.
pub fn binomial_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    match binomial_u128(n, k) {
        Some(v) if v < (1u128 << 100) => v as f64,
        _ => (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp(),
    }
}

/// ln C(n, k); requires k <= n.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// log(sum(exp(xs))) with the usual max shift. Empty input -> -inf.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut s = NeumaierSum::new();
    for &x in xs {
        s.add((x - m).exp());
    }
    m + s.total().ln()
}

/// Dense row-major k x k matrix product.
pub fn mat_mul(k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] += ail * b[l * k + j];
            }
        }
    }
    out
}

/// Dense matrix power by squaring; `e == 0` gives the identity.
pub fn mat_pow(k: usize, m: &[f64], e: u64) -> Vec<f64> {
    let mut result = vec![0.0; k * k];
    for i in 0..k {
        result[i * k + i] = 1.0;
    }
    let mut base = m.to_vec();
    let mut e = e;
    while e > 0 {
        if e & 1 == 1 {
            result = mat_mul(k, &result, &base);
        }
        e >>= 1;
        if e > 0 {
            base = mat_mul(k, &base, &base);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_exact_values() {
        assert_eq!(binomial_u128(0, 0), Some(1));
        assert_eq!(binomial_u128(5, 2), Some(10));
        assert_eq!(binomial_u128(63, 31), Some(916312070471295267));
        assert_eq!(binomial_u128(4, 7), Some(0));
    }

    #[test]
    fn ln_factorial_matches_direct() {
        for k in 0..40u64 {
            let direct: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = NeumaierSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.total(), 10.0);
    }

    #[test]
    fn mat_pow_identity_and_square() {
        let p = vec![0.9, 0.1, 0.2, 0.8];
        let i = mat_pow(2, &p, 0);
        assert_eq!(i, vec![1.0, 0.0, 0.0, 1.0]);
        let p2 = mat_pow(2, &p, 2);
        let expect = mat_mul(2, &p, &p);
        for (a, b) in p2.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
