//! Binomial pmf and partial sums with carried error bounds.
//!
//! `B(n,k,p)` uses a direct product for small `n` and Loader's saddle-point
//! form (Stirling-error and deviance terms) above that, which keeps relative
//! accuracy near machine precision where plain `lgamma` differences lose
//! digits to cancellation. Partial sums start at the in-range index nearest
//! the mode and walk outward with the term-ratio recurrence, so terms arrive
//! in decreasing order and the remaining tail can be bounded geometrically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit roundoff.
pub(crate) const U: f64 = f64::EPSILON / 2.0;

/// Largest `n` evaluated by direct product.
const DIRECT_MAX: u64 = 64;

/// Tail truncation threshold relative to the accumulated sum.
const TRUNCATION_REL: f64 = 1e-16;

/// Results below this are treated as having no relative accuracy.
const TINY: f64 = 1e-290;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A computed value with an absolute error bound: the true value lies in
/// `[value − err, value + err]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summed {
    pub value: f64,
    pub err: f64,
}

impl Summed {
    pub const ZERO: Summed = Summed {
        value: 0.0,
        err: 0.0,
    };
    pub const ONE: Summed = Summed {
        value: 1.0,
        err: 0.0,
    };

    pub fn lower(&self) -> f64 {
        self.value - self.err
    }

    pub fn upper(&self) -> f64 {
        self.value + self.err
    }
}

impl std::ops::Add for Summed {
    type Output = Summed;

    fn add(self, rhs: Summed) -> Summed {
        let value = self.value + rhs.value;
        Summed {
            value,
            err: self.err + rhs.err + U * value.abs(),
        }
    }
}

/// Kahan–Babuška–Neumaier accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub(crate) fn new(first: f64) -> Self {
        NeumaierSum {
            sum: first,
            comp: 0.0,
        }
    }

    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn check_args(n: u64, p: f64) -> Result<()> {
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p={p} is outside [0, 1]")));
    }
    Ok(())
}

/// `B(n, k, p)`; zero for `k` outside `[0, n]`.
pub fn pmf(n: u64, k: i64, p: f64) -> Result<f64> {
    check_args(n, p)?;
    Ok(pmf_raw(n, k, p))
}

/// Stirling error `ln(n!) − (n+½)ln n + n − ½ln(2π)` at integers.
#[allow(clippy::excessive_precision)]
fn stirlerr(n: u64) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_258_22,
        0.041_340_695_955_409_294_094,
        0.027_677_925_684_998_339_149,
        0.020_790_672_103_765_093_112,
        0.016_644_691_189_821_192_163,
        0.013_876_128_823_070_747_999,
        0.011_896_709_945_891_770_095,
        0.010_411_265_261_972_096_497,
        0.009_255_462_182_712_732_917_7,
        0.008_330_563_433_362_871_256_5,
        0.007_573_675_487_951_840_795,
        0.006_942_840_107_209_529_865_7,
        0.006_408_994_188_004_207_068_4,
        0.005_951_370_112_758_847_735_6,
        0.005_554_733_551_962_801_371,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < TABLE.len() as u64 {
        return TABLE[n as usize];
    }
    let nf = n as f64;
    let nn = nf * nf;
    if n > 500 {
        (S0 - S1 / nn) / nf
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/m) + m − x`, evaluated by series near `x = m`.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / m).ln() + m - x
}

fn pmf_direct(n: u64, k: u64, p: f64) -> f64 {
    let kk = k.min(n - k);
    let mut c = 1.0f64;
    for i in 1..=kk {
        c = c * (n - kk + i) as f64 / i as f64;
    }
    let (pk, qk) = (p.powi(k as i32), (1.0 - p).powi((n - k) as i32));
    if k == kk {
        c * pk * qk
    } else {
        c * qk * pk
    }
}

fn pmf_saddle(n: u64, k: u64, p: f64) -> f64 {
    let nf = n as f64;
    let q = 1.0 - p;
    if k == 0 {
        let lc = if p < 0.1 {
            -bd0(nf, nf * q) - nf * p
        } else {
            nf * (-p).ln_1p()
        };
        return lc.exp();
    }
    if k == n {
        let lc = if q < 0.1 {
            -bd0(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
        return lc.exp();
    }
    // Evaluate with the smaller count first so that B(n,k,p) and
    // B(n,n−k,1−p) round identically.
    let (j, pj, qj) = if k <= n - k { (k, p, q) } else { (n - k, q, p) };
    let jf = j as f64;
    let lc = stirlerr(n) - stirlerr(j) - stirlerr(n - j) - bd0(jf, nf * pj) - bd0(nf - jf, nf * qj);
    let lf = LN_2PI + jf.ln() + (-jf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// Unchecked pmf; accepts `n = 0` (where `B(0,0,p) = 1`).
pub(crate) fn pmf_raw(n: u64, k: i64, p: f64) -> f64 {
    if k < 0 || k as u64 > n {
        return 0.0;
    }
    let k = k as u64;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n <= DIRECT_MAX {
        let v = pmf_direct(n, k, p);
        if v > TINY {
            return v;
        }
    }
    pmf_saddle(n, k, p)
}

/// Relative error bound for a value returned by [`pmf_raw`].
pub(crate) fn pmf_rel_err(n: u64, k: u64, p: f64, value: f64) -> f64 {
    if value == 0.0 || value == 1.0 && (p == 0.0 || p == 1.0) {
        return 0.0;
    }
    if n <= DIRECT_MAX && value > TINY {
        return 4.0 * (n + 4) as f64 * U;
    }
    // The exponent is a sum of terms of size ~|ln value|; the rounded n·p
    // and n·q perturb the two deviance terms by ~|k − np|·u.
    let dev = (k as f64 - n as f64 * p).abs();
    U * (8.0 * value.ln().abs() + 4.0 * dev + 64.0)
}

/// `t·r/(1−r)`-style geometric bound on `remaining` further terms after
/// `next`, given the ratio `r` of successive terms going outward.
fn tail_bound(next: f64, r: f64, remaining: u64) -> f64 {
    let count = remaining as f64;
    if r < 1.0 {
        next * count.min(1.0 / (1.0 - r))
    } else {
        next * count
    }
}

/// `S(n, lo, hi, p)` with an absolute error bound.
///
/// `lo` and `hi` are clipped to `[0, n]`; an empty range sums to zero.
pub fn sum_range(n: u64, lo: i64, hi: i64, p: f64) -> Result<Summed> {
    check_args(n, p)?;
    Ok(sum_clipped(n, lo, hi, p))
}

/// `1 − S(n, lo, hi, p)` as the sum of the two tails outside `[lo, hi]`.
pub fn complement_sum(n: u64, lo: i64, hi: i64, p: f64) -> Result<Summed> {
    check_args(n, p)?;
    if lo < 0 || hi < lo || hi > n as i64 {
        return Err(Error::invalid(format!(
            "complement range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= n={n}"
        )));
    }
    Ok(complement_clipped(n, lo, hi, p))
}

/// Complement of a window already known to be non-empty and inside `[0, n]`.
pub(crate) fn complement_clipped(n: u64, lo: i64, hi: i64, p: f64) -> Summed {
    sum_clipped(n, 0, lo - 1, p) + sum_clipped(n, hi + 1, n as i64, p)
}

pub(crate) fn sum_clipped(n: u64, lo: i64, hi: i64, p: f64) -> Summed {
    let nn = n as i64;
    let lo = lo.max(0);
    let hi = hi.min(nn);
    if lo > hi {
        return Summed::ZERO;
    }
    if lo == 0 && hi == nn {
        return Summed::ONE;
    }
    if p == 0.0 {
        return if lo == 0 { Summed::ONE } else { Summed::ZERO };
    }
    if p == 1.0 {
        return if hi == nn { Summed::ONE } else { Summed::ZERO };
    }

    let mode = (((n + 1) as f64 * p).floor() as i64).clamp(0, nn);
    let start = mode.clamp(lo, hi);
    let t0 = pmf_raw(n, start, p);
    let count = (hi - lo + 1) as f64;
    if t0 < TINY {
        // Every other term is smaller than the start term.
        return Summed {
            value: t0 * count,
            err: (t0 + f64::MIN_POSITIVE) * count,
        };
    }

    // q = 1 − p carried as hi + lo parts so p/q is accurate for small p.
    let q_hi = 1.0 - p;
    let q_lo = (1.0 - q_hi) - p;
    let odds = p / q_hi * (1.0 - q_lo / q_hi);

    let mut acc = NeumaierSum::new(t0);
    let mut weighted = 0.0; // Σ steps·term, for the recurrence drift bound
    let mut truncated = 0.0;

    let mut t = t0;
    let mut k = start;
    let mut steps = 0u64;
    while k < hi {
        let r = (nn - k) as f64 / (k + 1) as f64 * odds;
        let next = t * r;
        let remaining = (hi - k) as u64;
        let bound = tail_bound(next, r, remaining);
        if r < 1.0 && bound <= TRUNCATION_REL * acc.value() {
            truncated += bound;
            break;
        }
        if next == 0.0 {
            truncated += f64::MIN_POSITIVE * remaining as f64;
            break;
        }
        t = next;
        k += 1;
        steps += 1;
        acc.add(t);
        weighted += steps as f64 * t;
    }

    let mut t = t0;
    let mut k = start;
    let mut steps = 0u64;
    while k > lo {
        let r = k as f64 / ((nn - k + 1) as f64 * odds);
        let next = t * r;
        let remaining = (k - lo) as u64;
        let bound = tail_bound(next, r, remaining);
        if r < 1.0 && bound <= TRUNCATION_REL * acc.value() {
            truncated += bound;
            break;
        }
        if next == 0.0 {
            truncated += f64::MIN_POSITIVE * remaining as f64;
            break;
        }
        t = next;
        k -= 1;
        steps += 1;
        acc.add(t);
        weighted += steps as f64 * t;
    }

    let value = acc.value();
    let e0 = pmf_rel_err(n, start as u64, p, t0);
    // Each recurrence step adds ~3 roundings plus the systematic odds error.
    let err = value * (e0 + 3.0 * U) + 6.0 * U * weighted + truncated;
    Summed { value, err }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn pmf_examples() {
        assert!(close(pmf(5, 2, 0.5).unwrap(), 0.3125, 1e-15));
        assert_eq!(pmf(4, 7, 0.3).unwrap(), 0.0);
        assert_eq!(pmf(4, -1, 0.3).unwrap(), 0.0);
        assert_eq!(pmf(10, 10, 1.0).unwrap(), 1.0);
        assert_eq!(pmf(10, 0, 0.0).unwrap(), 1.0);
        assert_eq!(pmf(10, 3, 0.0).unwrap(), 0.0);
        assert!(close(pmf(3, 1, 0.25).unwrap(), 0.421875, 1e-15));
    }

    #[test]
    fn pmf_rejects_bad_arguments() {
        assert!(pmf(0, 0, 0.5).is_err());
        assert!(pmf(5, 1, 1.5).is_err());
        assert!(pmf(5, 1, -0.1).is_err());
        assert!(pmf(5, 1, f64::NAN).is_err());
    }

    #[test]
    fn ln_2pi_constant() {
        assert!(((2.0 * std::f64::consts::PI).ln() - LN_2PI).abs() < 4e-16);
    }

    #[test]
    fn stirlerr_table_meets_series() {
        // The series at the hand-over point agrees with the exact value.
        let exact16 = 0.005_207_655_919_609_640_4_f64;
        assert!((stirlerr(16) - exact16).abs() < 1e-15, "{}", stirlerr(16));
    }

    #[test]
    fn saddle_matches_direct_near_the_switch() {
        for k in 0..=64 {
            for &p in &[0.01, 0.3, 0.5, 0.77] {
                let d = pmf_direct(64, k, p);
                let s = pmf_saddle(64, k, p);
                if d > 1e-280 {
                    assert!(close(s, d, 1e-13), "k={k} p={p} {s} {d}");
                }
            }
        }
    }

    #[test]
    fn sum_range_examples() {
        assert_eq!(sum_range(2, 0, 2, 0.3).unwrap().value, 1.0);
        assert_eq!(sum_range(4, 3, 1, 0.5).unwrap().value, 0.0);
        let s = sum_range(10, 4, 6, 0.5).unwrap();
        assert!(close(s.value, 0.65625, 1e-15));
        assert!(s.err < 1e-14);
    }

    #[test]
    fn complement_examples() {
        assert_eq!(complement_sum(10, 0, 10, 0.5).unwrap().value, 0.0);
        assert!(close(
            complement_sum(10, 4, 6, 0.5).unwrap().value,
            0.34375,
            1e-15
        ));
        assert!(close(
            complement_sum(2, 1, 1, 0.5).unwrap().value,
            0.5,
            1e-15
        ));
        assert!(complement_sum(10, 6, 4, 0.5).is_err());
        assert!(complement_sum(10, -1, 4, 0.5).is_err());
        assert!(complement_sum(10, 1, 11, 0.5).is_err());
    }

    #[test]
    fn large_n_tails_are_accurate() {
        // Normalisation and tail/complement consistency at n = 1e6.
        let n = 1_000_000;
        let p = 0.3;
        let mid = sum_range(n, 299_000, 301_000, p).unwrap();
        let comp = complement_sum(n, 299_000, 301_000, p).unwrap();
        assert!((mid.value + comp.value - 1.0).abs() < 1e-11);
        assert!(mid.err < 1e-11 && comp.err < 1e-11);
    }

    #[test]
    fn pmf_matches_statrs() {
        use statrs::distribution::{Binomial, Discrete};
        for &(n, p) in &[(50, 0.3), (1_000, 0.01), (100_000, 0.5), (2_707_001, 0.137)] {
            let d = Binomial::new(p, n).unwrap();
            let mode = (n as f64 * p) as u64;
            for k in [0, 1, mode / 2, mode, mode + 3, (mode * 3 / 2).min(n), n] {
                let want = d.pmf(k);
                // statrs goes through ln Γ, which loses about n·ln n ulps.
                let tol = 1e-13 + 4.0 * U * n as f64 * (n as f64).ln();
                if want > 1e-250 {
                    let got = pmf(n, k as i64, p).unwrap();
                    assert!(close(got, want, tol), "n={n} k={k} p={p}: {got} vs {want}");
                }
            }
        }
        // 40-digit reference value.
        let want = 7.051_802_350_934_43e-4;
        assert!(close(pmf(2_707_001, 370_859, 0.137).unwrap(), want, 1e-13));
    }

    #[test]
    fn extreme_p_sums() {
        assert_eq!(sum_range(10, 0, 0, 0.0).unwrap().value, 1.0);
        assert_eq!(sum_range(10, 1, 10, 0.0).unwrap().value, 0.0);
        assert_eq!(sum_range(10, 10, 10, 1.0).unwrap().value, 1.0);
        let tiny = sum_range(1000, 900, 1000, 1e-3).unwrap();
        assert!(tiny.value < 1e-290 && tiny.err < 1e-280);
    }
}
