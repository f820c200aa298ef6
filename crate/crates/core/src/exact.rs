//! Exact rational helpers.
//!
//! User-facing reals (margins, confidence parameter, interval endpoints and
//! evaluation points) are read as the decimal number their shortest
//! round-trip representation spells out, so `0.1` means `1/10` and the
//! integer windows `⌊n(p−ε)⌋` land where a person doing the arithmetic by hand
//! would put them.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest denominator accepted for a model parameter.
pub(crate) const MAX_PARAM_DEN: i128 = 1_000_000_000_000_000;

/// A fraction with `i128` parts and a positive denominator.
#[derive(Debug, Clone, Copy)]
pub struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = num.gcd(&den);
        if g > 1 {
            Frac {
                num: num / g,
                den: den / g,
            }
        } else {
            Frac { num, den }
        }
    }

    pub fn integer(v: i128) -> Self {
        Frac { num: v, den: 1 }
    }

    pub fn num(&self) -> i128 {
        self.num
    }

    pub fn den(&self) -> i128 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        // Correctly rounded whenever both parts fit in 53 bits.
        self.num as f64 / self.den as f64
    }

    pub fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }

    pub fn one_minus(&self) -> Frac {
        Frac::new(self.den - self.num, self.den)
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}

impl std::fmt::Display for Frac {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl std::str::FromStr for Frac {
    type Err = Error;

    fn from_str(s: &str) -> Result<Frac> {
        let bad = || Error::invalid(format!("{s:?} is not a fraction"));
        let (num, den) = s.split_once('/').unwrap_or((s, "1"));
        let num: i128 = num.trim().parse().map_err(|_| bad())?;
        let den: i128 = den.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        Ok(Frac::new(num, den))
    }
}

impl serde::Serialize for Frac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Frac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Frac, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl PartialEq for Frac {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frac {}

impl PartialOrd for Frac {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frac {
    fn cmp(&self, other: &Self) -> Ordering {
        match (
            self.num.checked_mul(other.den),
            other.num.checked_mul(self.den),
        ) {
            (Some(l), Some(r)) => l.cmp(&r),
            _ => {
                let l = BigInt::from(self.num) * BigInt::from(other.den);
                let r = BigInt::from(other.num) * BigInt::from(self.den);
                l.cmp(&r)
            }
        }
    }
}

/// Splits the shortest round-trip representation of a finite `x` into an
/// integer mantissa and a power-of-ten exponent.
fn decimal_parts(x: f64) -> (BigInt, i32) {
    let s = format!("{:e}", x);
    let (mant, exp) = s.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let negative = mant.starts_with('-');
    let mant = mant.trim_start_matches('-');
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = format!("{int_part}{frac_part}");
    let mut m: BigInt = digits.parse().expect("mantissa digits");
    if negative {
        m = -m;
    }
    (m, exp - frac_part.len() as i32)
}

/// Exact decimal value of `x` as a big rational.
pub fn decimal_big(x: f64) -> BigRational {
    let (m, e) = decimal_parts(x);
    let ten = BigInt::from(10u8);
    if e >= 0 {
        BigRational::from_integer(m * num_traits::pow(ten, e as usize))
    } else {
        BigRational::new(m, num_traits::pow(ten, (-e) as usize))
    }
}

/// Exact decimal value of `x` as a [`Frac`], rejecting values whose reduced
/// denominator exceeds `max_den`.
pub fn decimal_frac(x: f64, max_den: i128) -> Result<Frac> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("{x} is not a finite number")));
    }
    let r = decimal_big(x);
    let num = r.numer().to_i128();
    let den = r.denom().to_i128();
    match (num, den) {
        (Some(num), Some(den)) if den <= max_den => Ok(Frac::new(num, den)),
        _ => Err(Error::invalid(format!(
            "{x} has too many decimal places (at most 15 are supported)"
        ))),
    }
}

pub(crate) fn big_floor(x: &BigRational) -> i64 {
    x.floor()
        .to_integer()
        .to_i64()
        .expect("window index fits in i64")
}

pub(crate) fn big_ceil(x: &BigRational) -> i64 {
    x.ceil()
        .to_integer()
        .to_i64()
        .expect("window index fits in i64")
}

/// `⌊num/den⌋` for `den > 0`.
pub(crate) fn floor_div(num: i128, den: i128) -> i128 {
    Integer::div_floor(&num, &den)
}

/// `⌈num/den⌉` for `den > 0`.
pub(crate) fn ceil_div(num: i128, den: i128) -> i128 {
    -Integer::div_floor(&-num, &den)
}

/// Numerator of `Σ_{k<m} C(n,k) x^k y^(n−k)`; the tail probability is this
/// over `(x+y)^n`.
fn lower_tail_numerator(n: u64, m: u64, x: &BigUint, y: &BigUint) -> BigUint {
    if m == 0 {
        return BigUint::zero();
    }
    // Horner in x/y: Σ_{k<m} C(n,k) x^k y^(m−1−k), then scale by y^(n−m+1).
    let mut acc = BigUint::zero();
    let mut c = BigUint::one();
    for k in 0..m {
        acc = acc * y + &c;
        if k + 1 < m {
            c = c * (n - k) / (k + 1) * x;
        }
    }
    acc * num_traits::pow(y.clone(), (n - m + 1) as usize)
}

/// `1 − S(n, lo, hi, p)` compared against `delta` in exact arithmetic.
///
/// Returns `Ordering::Less` when the complement is strictly below `delta`.
pub(crate) fn exact_complement_cmp(
    n: u64,
    lo: i64,
    hi: i64,
    p: &BigRational,
    delta: &BigRational,
) -> Ordering {
    let lo = lo.max(0);
    let hi = hi.min(n as i64);
    if lo > hi {
        return BigRational::one().cmp(delta);
    }
    let denom = p.denom().to_biguint().expect("positive denominator");
    let x = p.numer().to_biguint().expect("p is non-negative");
    let y = &denom - &x;
    let lower = lower_tail_numerator(n, lo as u64, &x, &y);
    // Upper tail Σ_{k>hi} is the lower tail of n−K, which swaps x and y.
    let upper = lower_tail_numerator(n, n - hi as u64, &y, &x);
    let total = BigInt::from(lower + upper);
    let scale = BigInt::from(num_traits::pow(denom, n as usize));
    // total / scale  vs  delta.numer / delta.denom
    (total * delta.denom()).cmp(&(delta.numer() * scale))
}
