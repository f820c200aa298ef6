//! Error criteria and parameter intervals.

use serde::{Deserialize, Serialize};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use crate::error::{Error, Result};
use crate::exact::{big_ceil, big_floor, decimal_frac, Frac, MAX_PARAM_DEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// `|p̂ − p| < ε`
    Absolute,
    /// `|p̂ − p| < ε·p`
    Relative,
    /// `|p̂ − p| < ε_a` or `|p̂ − p| < ε_r·p`
    Mixed,
}

impl Criterion {
    pub fn short_name(&self) -> &'static str {
        match self {
            Criterion::Absolute => "abs",
            Criterion::Relative => "rel",
            Criterion::Mixed => "mixed",
        }
    }
}

/// A real parameter together with its exact decimal value.
#[derive(Debug, Clone, Copy)]
pub struct Param {
    value: f64,
    exact: Frac,
}

impl Param {
    fn new(value: f64, name: &str) -> Result<Self> {
        let exact = decimal_frac(value, MAX_PARAM_DEN)
            .map_err(|e| Error::invalid(format!("{name}: {e}")))?;
        Ok(Param { value, exact })
    }

    fn open_unit(value: f64, name: &str) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::invalid(format!(
                "{name}={value} must lie strictly inside (0, 1)"
            )));
        }
        Param::new(value, name)
    }

    pub(crate) fn from_frac(exact: Frac) -> Self {
        Param {
            value: exact.to_f64(),
            exact,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Frac {
        self.exact
    }
}

/// Error criterion plus the confidence parameter `δ`; the requirement is
/// coverage `> 1 − δ` everywhere on the interval.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSpec {
    kind: Criterion,
    eps_abs: Option<Param>,
    eps_rel: Option<Param>,
    delta: Param,
}

impl ErrorSpec {
    pub fn absolute(eps: f64, delta: f64) -> Result<Self> {
        Ok(ErrorSpec {
            kind: Criterion::Absolute,
            eps_abs: Some(Param::open_unit(eps, "eps")?),
            eps_rel: None,
            delta: Param::open_unit(delta, "delta")?,
        })
    }

    pub fn relative(eps: f64, delta: f64) -> Result<Self> {
        Ok(ErrorSpec {
            kind: Criterion::Relative,
            eps_abs: None,
            eps_rel: Some(Param::open_unit(eps, "eps")?),
            delta: Param::open_unit(delta, "delta")?,
        })
    }

    pub fn mixed(eps_abs: f64, eps_rel: f64, delta: f64) -> Result<Self> {
        Ok(ErrorSpec {
            kind: Criterion::Mixed,
            eps_abs: Some(Param::open_unit(eps_abs, "eps_abs")?),
            eps_rel: Some(Param::open_unit(eps_rel, "eps_rel")?),
            delta: Param::open_unit(delta, "delta")?,
        })
    }

    /// Build from optional parts, as parsed from a command line or file.
    pub fn from_parts(
        kind: Criterion,
        eps_abs: Option<f64>,
        eps_rel: Option<f64>,
        delta: f64,
    ) -> Result<Self> {
        let need = |x: Option<f64>, name: &str| {
            x.ok_or_else(|| {
                Error::invalid(format!("{} criterion requires {name}", kind.short_name()))
            })
        };
        match kind {
            Criterion::Absolute => ErrorSpec::absolute(need(eps_abs, "eps_abs")?, delta),
            Criterion::Relative => ErrorSpec::relative(need(eps_rel, "eps_rel")?, delta),
            Criterion::Mixed => {
                ErrorSpec::mixed(need(eps_abs, "eps_abs")?, need(eps_rel, "eps_rel")?, delta)
            }
        }
    }

    /// Same margins with a different confidence parameter.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Ok(ErrorSpec {
            delta: Param::open_unit(delta, "delta")?,
            ..*self
        })
    }

    pub fn kind(&self) -> Criterion {
        self.kind
    }

    pub fn eps_abs(&self) -> Option<f64> {
        self.eps_abs.map(|p| p.value)
    }

    pub fn eps_rel(&self) -> Option<f64> {
        self.eps_rel.map(|p| p.value)
    }

    pub fn delta(&self) -> f64 {
        self.delta.value
    }

    pub(crate) fn delta_param(&self) -> Param {
        self.delta
    }

    pub(crate) fn eps_abs_param(&self) -> Option<Param> {
        self.eps_abs
    }

    pub(crate) fn eps_rel_param(&self) -> Option<Param> {
        self.eps_rel
    }

    /// `ε_a/ε_r` for the mixed criterion.
    pub fn crossover(&self) -> Option<Frac> {
        match (self.kind, self.eps_abs, self.eps_rel) {
            (Criterion::Mixed, Some(a), Some(r)) => Some(Frac::new(
                a.exact.num() * r.exact.den(),
                a.exact.den() * r.exact.num(),
            )),
            _ => None,
        }
    }

    /// Whether `p` falls on the absolute branch (always true for the absolute
    /// criterion, never for the relative one).
    pub(crate) fn uses_absolute_branch(&self, p: &BigRational) -> bool {
        match self.kind {
            Criterion::Absolute => true,
            Criterion::Relative => false,
            Criterion::Mixed => *p <= self.crossover().expect("mixed has a crossover").to_big(),
        }
    }

    /// The acceptance window `[g, h]` for `K` at an exact `p`.
    pub(crate) fn window_exact(&self, n: u64, p: &BigRational) -> (i64, i64) {
        let nn = BigRational::from_integer(BigInt::from(n));
        if self.uses_absolute_branch(p) {
            let eps = self.eps_abs.expect("absolute margin").exact.to_big();
            let g = big_floor(&(&nn * (p - &eps))) + 1;
            let h = big_ceil(&(&nn * (p + &eps))) - 1;
            (g, h)
        } else {
            let eps = self.eps_rel.expect("relative margin").exact.to_big();
            let one = BigRational::one();
            let g = big_floor(&(&nn * p * (&one - &eps))) + 1;
            let h = big_ceil(&(&nn * p * (&one + &eps))) - 1;
            (g, h)
        }
    }

    /// Identifies the margins (not `δ`) a candidate set was built for.
    pub(crate) fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        mix(self.kind as u64);
        for p in [self.eps_abs, self.eps_rel] {
            match p {
                Some(p) => {
                    mix(p.exact.num() as u64);
                    mix((p.exact.num() >> 64) as u64);
                    mix(p.exact.den() as u64);
                    mix((p.exact.den() >> 64) as u64);
                }
                None => mix(u64::MAX),
            }
        }
        h
    }
}

/// Prior knowledge `p ∈ [a, b]`, with the symmetry-reduced image `[a′, b′] ⊆ [0, ½]`
/// used by the absolute criterion.
#[derive(Debug, Clone, Copy)]
pub struct ParamInterval {
    a: Param,
    b: Param,
    a_reduced: Param,
    b_reduced: Param,
}

impl ParamInterval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::invalid(format!(
                "interval [{a}, {b}] must satisfy 0 <= a < b <= 1"
            )));
        }
        let a = Param::new(a, "a")?;
        let b = Param::new(b, "b")?;
        let (ar, br) = reduce(a.exact, b.exact);
        Ok(ParamInterval {
            a,
            b,
            a_reduced: Param::from_frac(ar),
            b_reduced: Param::from_frac(br),
        })
    }

    pub fn unit() -> Self {
        ParamInterval::new(0.0, 1.0).expect("[0, 1] is valid")
    }

    pub(crate) fn from_fracs(a: Frac, b: Frac) -> Self {
        let (ar, br) = reduce(a, b);
        ParamInterval {
            a: Param::from_frac(a),
            b: Param::from_frac(b),
            a_reduced: Param::from_frac(ar),
            b_reduced: Param::from_frac(br),
        }
    }

    pub fn a(&self) -> f64 {
        self.a.value
    }

    pub fn b(&self) -> f64 {
        self.b.value
    }

    pub fn a_reduced(&self) -> f64 {
        self.a_reduced.value
    }

    pub fn b_reduced(&self) -> f64 {
        self.b_reduced.value
    }

    pub(crate) fn a_exact(&self) -> Frac {
        self.a.exact
    }

    pub(crate) fn b_exact(&self) -> Frac {
        self.b.exact
    }

    pub(crate) fn reduced_exact(&self) -> (Frac, Frac) {
        (self.a_reduced.exact, self.b_reduced.exact)
    }

    /// Checks the interval against the criterion's own domain.
    pub fn validate_for(&self, spec: &ErrorSpec) -> Result<()> {
        if spec.kind() == Criterion::Relative && self.a.exact.is_zero() {
            return Err(Error::invalid(
                "the relative criterion requires a > 0 (relative error is undefined at p = 0)",
            ));
        }
        Ok(())
    }
}

fn reduce(a: Frac, b: Frac) -> (Frac, Frac) {
    let one = Frac::integer(1);
    let half = Frac::new(1, 2);
    let sum = Frac::new(a.num() * b.den() + b.num() * a.den(), a.den() * b.den());
    let ar = if sum <= one { a } else { b.one_minus() };
    let br = if b <= half {
        b
    } else if a < half {
        half
    } else {
        a.one_minus()
    };
    (ar, br)
}
